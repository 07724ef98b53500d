//! The dmp dialect: declarative halo swaps over a cartesian rank grid,
//! the decomposition pass producing them and redundant-swap elimination.

mod decompose;
mod eliminate;
pub mod ops;
pub mod strategy;
mod topology;

pub use decompose::decompose_stencil;
pub use eliminate::eliminate_redundant_swaps;
pub use strategy::{
    exchange_templates, generate_exchanges, local_bounds, DecompositionError, DecompositionStrategy, SlicingStrategy,
};
pub use topology::{ExchangeDecl, GridTopology};

/// Function attribute holding the rank grid of a decomposed function.
pub const GRID_ATTR: &str = "dmp.grid";
/// Function attribute holding the global domain (the common store range).
pub const DOMAIN_ATTR: &str = "dmp.domain";
/// Function attribute naming the embedded serial reference function.
pub const REFERENCE_ATTR: &str = "dmp.reference";

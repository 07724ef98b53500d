//! The mpi dialect: an MPI subset as IR ops, the lowering of halo swaps onto
//! it and its lowering to calls of the C interface.

pub mod abi;
mod from_dmp;
pub mod ops;
mod to_func;

pub use abi::{AbiError, AbiTable};
pub use from_dmp::{exchange_tag, lower_dmp_to_mpi};
pub use to_func::{external_signature, lower_mpi_to_func};

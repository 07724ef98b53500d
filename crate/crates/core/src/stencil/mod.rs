//! The stencil dialect: bounded field/temp types, the load/apply/access/
//! return/store ops, extent and bounds analyses and the lowering to loops.
//!
//! A stencil program is a function whose field arguments hold the time
//! slots of each simulated quantity. An optional trailing `index` argument
//! is the number of timesteps; the body then typically contains an
//! `scf.for` time loop that rotates the field slots through `iter_args`.

mod analysis;
mod bounds;
mod lower;
pub mod ops;

pub use analysis::{access_offsets, infer_access_extent, propagate_bounds};
pub(crate) use analysis::{infer_with_table, reset_temp_bounds};
pub use bounds::{AccessExtent, Bounds, PointIter};
pub use lower::lower_stencil_to_loops;

use crate::ir::{Attribute, Module, Operation};

/// Function attribute marking the serial copy embedded by decomposition.
pub const SERIAL_REFERENCE_ATTR: &str = "dmp.serial_reference";
/// Function attribute recording the logical bounds of each argument after
/// fields have been lowered to plain buffers.
pub const ARG_BOUNDS_ATTR: &str = "stencil.arg_bounds";
/// Optional function attribute naming the arguments, e.g. `["u", "u_next"]`.
pub const ARG_NAMES_ATTR: &str = "arg_names";

/// The function a driver should run: the first defined function that is not
/// an embedded serial reference.
pub fn entry_function(m: &Module) -> Option<&Operation> {
    m.functions().find(|f| !f.regions.is_empty() && f.attr(SERIAL_REFERENCE_ATTR).is_none())
}

/// Name of argument `i`, from `arg_names` when present.
pub fn arg_name(func: &Operation, i: usize) -> String {
    func.attr(ARG_NAMES_ATTR)
        .and_then(|a| match a {
            Attribute::Array(items) => items.get(i).and_then(|x| x.as_str()).map(str::to_string),
            _ => None,
        })
        .unwrap_or_else(|| format!("arg{i}"))
}

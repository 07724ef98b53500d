#![allow(dead_code)]

use xstencil_core::dmp::GridTopology;
use xstencil_core::ir::{parse_module, Module};
use xstencil_core::passes::run_pipeline;
use xstencil_exec::{FieldData, Level};

pub fn parse(text: &str) -> Module {
    parse_module(text).unwrap_or_else(|e| panic!("{e}"))
}

pub fn pipeline(m: &Module, p: &str) -> Module {
    run_pipeline(m, p).unwrap_or_else(|e| panic!("{p}: {e}"))
}

/// The module at `level` after decomposing over `grid`.
pub fn lowered(m: &Module, grid: &GridTopology, level: Level) -> Module {
    let mut p = format!("propagate-bounds,decompose grid={grid}");
    if matches!(level, Level::Mpi | Level::Func) {
        p.push_str(",lower-dmp-to-mpi");
    }
    if level == Level::Func {
        p.push_str(",lower-mpi-to-func");
    }
    pipeline(m, &p)
}

/// Core points of `a` and `b` are bitwise equal.
pub fn assert_core_equal(a: &[FieldData], b: &[FieldData], core: &xstencil_core::stencil::Bounds) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!(x.bitwise_eq_on(y, core), "field '{}' differs on {core}, max diff {}", x.name, x.max_abs_diff(y, core));
    }
}

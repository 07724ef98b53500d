//! The registered passes and a convenience driver for textual pipelines.

use std::sync::OnceLock;

use crate::dmp::{decompose_stencil, eliminate_redundant_swaps, GridTopology, SlicingStrategy};
use crate::ir::pass::{parse_pipeline, PassError, PassInfo, PassOptions, PassRegistry, PipelineError};
use crate::ir::Module;
use crate::mpi::{lower_dmp_to_mpi, lower_mpi_to_func, AbiTable};
use crate::stencil::{lower_stencil_to_loops, propagate_bounds};

/// Environment variable naming the ABI table used when `lower-mpi-to-func`
/// gets no `abi=` option.
pub const ABI_ENV: &str = "XSTENCIL_ABI";

pub fn registry() -> &'static PassRegistry {
    static REGISTRY: OnceLock<PassRegistry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r = PassRegistry::default();
        r.register(PassInfo {
            name: "propagate-bounds",
            options: &[],
            run: |m, _| propagate_bounds(m),
            summary: "infer the bounds of every stencil temp from the store ranges",
        });
        for name in ["decompose", "decompose-stencil"] {
            r.register(PassInfo {
                name,
                options: &["grid", "strategy"],
                run: run_decompose,
                summary: "split the domain over a rank grid and insert halo swaps (grid=AxB)",
            });
        }
        r.register(PassInfo {
            name: "eliminate-redundant-swaps",
            options: &[],
            run: |m, _| {
                eliminate_redundant_swaps(m);
                Ok(())
            },
            summary: "drop swaps of buffers not written since the previous swap",
        });
        r.register(PassInfo {
            name: "lower-stencil-to-loops",
            options: &[],
            run: |m, _| lower_stencil_to_loops(m),
            summary: "lower stencil ops to scf.for loop nests over memrefs",
        });
        r.register(PassInfo {
            name: "lower-dmp-to-mpi",
            options: &["hoist"],
            run: |m, o| lower_dmp_to_mpi(m, o.get_bool("hoist", true)?),
            summary: "lower halo swaps to packed non-blocking messages (hoist=true)",
        });
        r.register(PassInfo {
            name: "lower-mpi-to-func",
            options: &["abi"],
            run: run_lower_mpi_to_func,
            summary: "lower mpi ops to external calls with ABI constants (abi=FILE)",
        });
        r
    })
}

fn run_decompose(m: &mut Module, o: &PassOptions) -> Result<(), PassError> {
    let grid = o.get("grid").ok_or_else(|| PassError::new("decompose needs grid=AxB..."))?;
    let topo = GridTopology::parse(grid).map_err(PassError::new)?;
    match o.get("strategy").unwrap_or("slice") {
        "slice" => decompose_stencil(m, &topo, &SlicingStrategy),
        other => Err(PassError::new(format!("unknown decomposition strategy '{other}'"))),
    }
}

fn run_lower_mpi_to_func(m: &mut Module, o: &PassOptions) -> Result<(), PassError> {
    let path = o.get("abi").map(str::to_string).or_else(|| std::env::var(ABI_ENV).ok());
    let abi = match path {
        Some(p) => load_abi(&p)?,
        None => AbiTable::mpich(),
    };
    lower_mpi_to_func(m, &abi)
}

pub fn load_abi(path: &str) -> Result<AbiTable, PassError> {
    let text = std::fs::read_to_string(path).map_err(|e| PassError::new(format!("cannot read ABI table {path}: {e}")))?;
    AbiTable::parse(&text).map_err(|e| PassError::new(format!("{path}: {e}")))
}

/// Parses and runs a textual pipeline such as
/// `"propagate-bounds,decompose grid=2x2,lower-dmp-to-mpi"`.
pub fn run_pipeline(m: &Module, pipeline: &str) -> Result<Module, PipelineError> {
    let specs = parse_pipeline(pipeline)?;
    registry().run(m, &specs)
}

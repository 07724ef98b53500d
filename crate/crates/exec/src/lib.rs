//! Execution of xstencil IR: reference interpreters for every level, a
//! deterministic multi-rank message-passing simulator, benchmark kernel
//! generation and throughput reporting.

pub mod bench;
pub mod comm;
pub mod data;
mod interp;
pub mod kernels;
mod program;
mod run;
pub mod sim;

use std::fmt;

use thiserror::Error;

pub use bench::{bench_kernel, report_throughput, BenchRecord};
pub use data::{Data, Elem, FieldData, Scalar};
pub use kernels::{generate_kernel, Kernel, KernelKind, KernelPreset};
pub use program::Program;
pub use run::{random_init, run_loops, run_serial_report, run_serial_stencil, OpStats, RunReport};
pub use sim::{gather_into, scatter, simulate_distributed, Level, Schedule, SimOptions, SimReport};

/// A rank stuck in a blocking operation when the simulation deadlocked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockedRank {
    pub rank: usize,
    pub waiting_in: String,
}

impl fmt::Display for BlockedRank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rank {} blocked in {}", self.rank, self.waiting_in)
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("trap in {op}: {message}")]
    Trap { op: String, message: String },
    #[error("deadlock: {}", .blocked.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Deadlock { blocked: Vec<BlockedRank> },
    #[error("{0}")]
    Input(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("rank {rank}: {source}")]
    Rank { rank: usize, source: Box<ExecError> },
    #[error("execution aborted")]
    Aborted,
}

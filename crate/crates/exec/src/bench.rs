//! Throughput measurement in grid points updated per second.

use std::fmt::Write as _;
use std::time::Instant;

use xstencil_core::dmp::GridTopology;
use xstencil_core::passes::run_pipeline;

use crate::kernels::{generate_kernel, KernelPreset};
use crate::run::run_serial_report;
use crate::sim::{simulate_distributed, Level, SimOptions};
use crate::ExecError;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub kernel: String,
    pub shape: Vec<i64>,
    pub sdo: u32,
    /// `serial` or the rank grid, e.g. `2x2`.
    pub topology: String,
    pub timesteps: u64,
    pub core_points: u64,
    pub seconds: f64,
}

impl BenchRecord {
    /// Core points × timesteps / seconds / 1e9; zero for runs without
    /// timesteps or without measurable time.
    pub fn gpts(&self) -> f64 {
        if self.timesteps == 0 || self.seconds <= 0.0 {
            return 0.0;
        }
        self.core_points as f64 * self.timesteps as f64 / self.seconds / 1e9
    }

    fn flag(&self) -> &'static str {
        if self.timesteps == 0 {
            "zero-timesteps"
        } else if self.seconds <= 0.0 {
            "no-time"
        } else {
            ""
        }
    }
}

pub const CSV_HEADER: &str = "kernel,shape,sdo,topology,timesteps,core_points,seconds,gpts_per_s,flag";

/// CSV text: a header and one row per record.
pub fn report_throughput(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let shape = r.shape.iter().map(ToString::to_string).collect::<Vec<_>>().join("x");
        let _ = writeln!(
            out,
            "{},{shape},{},{},{},{},{:e},{:e},{}",
            r.kernel,
            r.sdo,
            r.topology,
            r.timesteps,
            r.core_points,
            r.seconds,
            r.gpts(),
            r.flag()
        );
    }
    out
}

/// Generates, compiles and runs one kernel, timing only the execution.
/// Without a grid the serial interpreter runs; otherwise the decomposed
/// program runs on the simulator at `level`.
pub fn bench_kernel(preset: &KernelPreset, grid: Option<&GridTopology>, level: Level) -> Result<BenchRecord, ExecError> {
    let kernel = generate_kernel(preset)?;
    let init = kernel.init(1);
    let seconds = match grid {
        None => {
            let m = run_pipeline(&kernel.module, "propagate-bounds").map_err(|e| ExecError::Input(e.to_string()))?;
            let start = Instant::now();
            run_serial_report(&m, &init, preset.timesteps)?;
            start.elapsed().as_secs_f64()
        }
        Some(g) => {
            let mut pipeline = format!("propagate-bounds,decompose grid={g}");
            if matches!(level, Level::Mpi | Level::Func) {
                pipeline.push_str(",lower-dmp-to-mpi");
            }
            if level == Level::Func {
                pipeline.push_str(",lower-mpi-to-func");
            }
            let m = run_pipeline(&kernel.module, &pipeline).map_err(|e| ExecError::Input(e.to_string()))?;
            let start = Instant::now();
            simulate_distributed(&m, g, &init, preset.timesteps, level, &SimOptions::default())?;
            start.elapsed().as_secs_f64()
        }
    };
    Ok(BenchRecord {
        kernel: preset.kind.name().to_string(),
        shape: preset.shape.clone(),
        sdo: preset.sdo,
        topology: grid.map_or_else(|| "serial".to_string(), ToString::to_string),
        timesteps: preset.timesteps,
        core_points: preset.core().num_points() as u64,
        seconds,
    })
}

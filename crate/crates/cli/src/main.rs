//! `xstencil`: parse, verify, transform, run and benchmark stencil IR.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use xstencil_core::dmp::GridTopology;
use xstencil_core::ir::pass::PipelineError;
use xstencil_core::ir::{parse_module, print_module, verify_module, Diagnostic, Module};
use xstencil_core::mpi::AbiTable;
use xstencil_core::passes::{load_abi, registry, run_pipeline, ABI_ENV};
use xstencil_exec::{
    bench_kernel, generate_kernel, random_init, report_throughput, run_serial_report, simulate_distributed, Elem, FieldData, KernelKind,
    KernelPreset, Level, Schedule, SimOptions,
};

#[derive(Parser)]
#[command(name = "xstencil", version, about = "Stencil compiler and message-passing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// IR file; standard input when omitted or `-`.
    file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a module and print it back without verifying.
    Parse(Input),
    /// Verify a module; diagnostics go to stderr.
    Verify(Input),
    /// Parse, verify and print a module in canonical form.
    Print(Input),
    /// Run a comma-separated pass pipeline and print the result.
    Pipeline {
        /// e.g. "propagate-bounds,decompose grid=2x2,lower-dmp-to-mpi".
        #[arg(required_unless_present = "list")]
        pipeline: Option<String>,
        #[command(flatten)]
        input: Input,
        /// List the registered passes and exit.
        #[arg(long)]
        list: bool,
    },
    /// Interpret a stencil module serially.
    RunSerial {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a decomposed module on simulated ranks.
    Simulate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        run: RunArgs,
        /// Rank grid; defaults to the grid the module was decomposed for.
        #[arg(long)]
        grid: Option<String>,
        /// dmp, mpi or func; detected from the module when omitted.
        #[arg(long)]
        level: Option<String>,
        /// Resume ranks in a random order drawn from this seed.
        #[arg(long)]
        schedule_seed: Option<u64>,
        /// Compare with the serial reference; exit 1 unless equal.
        #[arg(long)]
        check: bool,
        /// Accept absolute differences up to this value instead of
        /// requiring bitwise equality.
        #[arg(long)]
        tol: Option<f64>,
        /// ABI table for func-level modules (default: $XSTENCIL_ABI or the built-in table).
        #[arg(long)]
        abi: Option<String>,
    },
    /// Measure throughput of generated kernels; prints CSV.
    Bench {
        /// Kernel kinds, comma separated.
        #[arg(long, default_value = "heat")]
        kernel: String,
        /// Core shapes such as 64x64; may be repeated.
        #[arg(long, default_values_t = vec!["64x64".to_string()])]
        shape: Vec<String>,
        /// Space discretization orders, comma separated.
        #[arg(long, default_value = "2")]
        sdo: String,
        /// `serial` or rank grids, comma separated.
        #[arg(long, default_value = "serial")]
        grid: String,
        #[arg(short = 'T', long, default_value_t = 4)]
        timesteps: u64,
        #[arg(long, default_value = "func")]
        level: String,
    },
    /// Emit a benchmark kernel as stencil IR.
    GenKernel {
        /// heat, wave or copy.
        kind: String,
        #[arg(long)]
        dims: Option<usize>,
        #[arg(long, default_value_t = 2)]
        sdo: u32,
        /// Core shape such as 64x64 (default 64 per dimension).
        #[arg(long)]
        shape: Option<String>,
        /// f64 or f32.
        #[arg(long, default_value = "f64")]
        elem: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(short = 'T', long, default_value_t = 1)]
    timesteps: u64,
    /// Seed of the uniform initial data.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Print dynamic op counts.
    #[arg(long)]
    stats: bool,
}

/// A failure whose diagnostics were already printed.
#[derive(Debug)]
struct Reported;

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("failed")
    }
}

impl std::error::Error for Reported {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<Reported>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}

struct Source {
    name: String,
    text: String,
}

fn read_input(input: &Input) -> Result<Source> {
    match &input.file {
        Some(p) if p.as_os_str() != "-" => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            Ok(Source { name: p.display().to_string(), text })
        }
        _ => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).context("cannot read standard input")?;
            Ok(Source { name: "<stdin>".into(), text })
        }
    }
}

fn report_diagnostics(file: &str, diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{file}:{d}");
    }
}

fn parse(src: &Source) -> Result<Module> {
    parse_module(&src.text).map_err(|e| {
        eprintln!("{}:{e}", src.name);
        Reported.into()
    })
}

fn parse_verified(src: &Source) -> Result<Module> {
    let m = parse(src)?;
    if let Err(diags) = verify_module(&m) {
        report_diagnostics(&src.name, &diags);
        bail!(Reported);
    }
    Ok(m)
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Parse(input) => emit(&print_module(&parse(&read_input(&input)?)?)),
        Command::Verify(input) => {
            let src = read_input(&input)?;
            parse_verified(&src)?;
            eprintln!("{}: ok", src.name);
            Ok(())
        }
        Command::Print(input) => emit(&print_module(&parse_verified(&read_input(&input)?)?)),
        Command::Pipeline { list: true, .. } => {
            let reg = registry();
            let mut names: Vec<_> = reg.names().collect();
            names.sort();
            for n in names {
                println!("{n:28} {}", reg.get(n).unwrap().summary);
            }
            Ok(())
        }
        Command::Pipeline { pipeline, input, .. } => {
            let src = read_input(&input)?;
            let m = parse_verified(&src)?;
            emit(&print_module(&transform(&src, &m, &pipeline.unwrap_or_default())?))
        }
        Command::RunSerial { input, run } => {
            let m = parse_verified(&read_input(&input)?)?;
            let init = random_init(&m, run.seed)?;
            let report = run_serial_report(&m, &init, run.timesteps)?;
            print_fields(&report.outputs);
            if run.stats {
                print!("{}", report.stats);
            }
            Ok(())
        }
        Command::Simulate { input, run, grid, level, schedule_seed, check, tol, abi } => {
            let m = parse_verified(&read_input(&input)?)?;
            simulate(&m, &run, grid, level, schedule_seed, check, tol, abi)
        }
        Command::Bench { kernel, shape, sdo, grid, timesteps, level } => {
            let level = Level::parse(&level).ok_or_else(|| anyhow!("unknown level '{level}' (dmp, mpi or func)"))?;
            let mut records = Vec::new();
            for k in split(&kernel) {
                let kind = KernelKind::parse(k).ok_or_else(|| anyhow!("unknown kernel '{k}' (heat, wave or copy)"))?;
                for s in &shape {
                    let dims = parse_shape(s)?;
                    for o in split(&sdo) {
                        let o: u32 = o.parse().with_context(|| format!("invalid order '{o}'"))?;
                        for g in split(&grid) {
                            let topo = if g == "serial" { None } else { Some(GridTopology::parse(g).map_err(|e| anyhow!(e))?) };
                            let mut preset = KernelPreset::new(kind, dims.clone(), o);
                            preset.timesteps = timesteps;
                            records.push(bench_kernel(&preset, topo.as_ref(), level)?);
                        }
                    }
                }
            }
            emit(&report_throughput(&records))
        }
        Command::GenKernel { kind, dims, sdo, shape, elem } => {
            let kind = KernelKind::parse(&kind).ok_or_else(|| anyhow!("unknown kernel '{kind}' (heat, wave or copy)"))?;
            let shape = match (shape, dims) {
                (Some(s), d) => {
                    let s = parse_shape(&s)?;
                    if d.is_some_and(|d| d != s.len()) {
                        bail!("--shape has {} dimensions but --dims is {}", s.len(), d.unwrap());
                    }
                    s
                }
                (None, d) => vec![64; d.unwrap_or(2)],
            };
            let mut preset = KernelPreset::new(kind, shape, sdo);
            preset.elem = match elem.as_str() {
                "f64" => Elem::F64,
                "f32" => Elem::F32,
                other => bail!("unsupported element type '{other}' (f64 or f32)"),
            };
            emit(&generate_kernel(&preset)?.text)
        }
    }
}

fn transform(src: &Source, m: &Module, pipeline: &str) -> Result<Module> {
    run_pipeline(m, pipeline).map_err(|e| match e {
        PipelineError::Verification { pass, diagnostics } => {
            eprintln!("{}: module does not verify after '{pass}':", src.name);
            report_diagnostics(&src.name, &diagnostics);
            Reported.into()
        }
        other => anyhow!(other),
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    m: &Module,
    run: &RunArgs,
    grid: Option<String>,
    level: Option<String>,
    schedule_seed: Option<u64>,
    check: bool,
    tol: Option<f64>,
    abi: Option<String>,
) -> Result<()> {
    let topo = match grid {
        Some(g) => GridTopology::parse(&g).map_err(|e| anyhow!(e))?,
        None => module_grid(m).ok_or_else(|| anyhow!("the module is not decomposed; run the decompose pass first or pass --grid"))?,
    };
    let level = match level {
        Some(l) => Level::parse(&l).ok_or_else(|| anyhow!("unknown level '{l}' (dmp, mpi or func)"))?,
        None => Level::detect(m),
    };
    let abi = match abi.or_else(|| std::env::var(ABI_ENV).ok()) {
        Some(p) => load_abi(&p).map_err(|e| anyhow!(e.message))?,
        None => AbiTable::mpich(),
    };
    let opts = SimOptions { schedule: schedule_seed.map_or(Schedule::RoundRobin, Schedule::Seeded), abi };
    let init = random_init(m, run.seed)?;
    let report = simulate_distributed(m, &topo, &init, run.timesteps, level, &opts)?;
    print_fields(&report.outputs);
    println!("messages {} elements {}", report.messages, report.elements_sent);
    if run.stats {
        print!("{}", report.stats);
    }
    if !check {
        return Ok(());
    }
    let serial = run_serial_report(m, &init, run.timesteps)?.outputs;
    if serial.len() != report.outputs.len() {
        bail!("serial run produced {} field(s), the simulation {}", serial.len(), report.outputs.len());
    }
    let mut equal = true;
    for (s, d) in serial.iter().zip(&report.outputs) {
        let ok = match tol {
            None => s.bitwise_eq_on(d, &s.bounds),
            Some(t) => s.max_abs_diff(d, &s.bounds) <= t,
        };
        if !ok {
            equal = false;
            eprintln!("{}: differs from the serial result (max abs diff {:e})", s.name, s.max_abs_diff(d, &s.bounds));
        }
    }
    if !equal {
        bail!(Reported);
    }
    println!("check passed: {} field(s) {} to the serial run", serial.len(), if tol.is_some() { "within tolerance" } else { "bitwise equal" });
    Ok(())
}

fn module_grid(m: &Module) -> Option<GridTopology> {
    m.functions().find_map(|f| match f.attr(xstencil_core::dmp::GRID_ATTR) {
        Some(xstencil_core::ir::Attribute::Grid(g)) => Some(g.clone()),
        _ => None,
    })
}

fn split(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty())
}

fn parse_shape(s: &str) -> Result<Vec<i64>> {
    s.split('x').map(|p| p.trim().parse::<i64>().with_context(|| format!("invalid shape '{s}'"))).collect()
}

/// One line per field: name, bounds, sum and a hash of the exact bits.
fn print_fields(fields: &[FieldData]) {
    for f in fields {
        let mut sum = 0.0;
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for i in 0..f.data.len() {
            let v = f.data.get(i).as_f64();
            sum += v;
            for b in v.to_bits().to_le_bytes() {
                hash = (hash ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
            }
        }
        println!("{} {} sum {sum:.17e} bits {hash:016x}", f.name, f.bounds);
    }
}

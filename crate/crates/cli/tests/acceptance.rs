//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when
//! any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xstencil_core::dmp::{generate_exchanges, local_bounds, ExchangeDecl, GridTopology};
use xstencil_core::ir::{parse_module, print_module, structurally_equal, verify_module, Attribute, Module, Operation};
use xstencil_core::passes::run_pipeline;
use xstencil_core::stencil::{access_offsets, infer_access_extent, AccessExtent, Bounds};
use xstencil_exec::{generate_kernel, random_init, run_serial_stencil, simulate_distributed, FieldData, KernelKind, KernelPreset, Level, SimOptions};

const LISTING1: &str = include_str!("../../core/tests/fixtures/listing1.xir");
const LISTING2: &str = include_str!("../../core/tests/fixtures/listing2.xir");
const LISTING4: &str = include_str!("../../core/tests/fixtures/listing4.xir");
const TWO_LOADS: &str = include_str!("../../core/tests/fixtures/two_loads.xir");
const LOAD_STORE_LOAD: &str = include_str!("../../core/tests/fixtures/load_store_load.xir");

/// Wall-clock budgets.
const ROUNDTRIP_BUDGET: Duration = Duration::from_secs(1);
const HALO_BUDGET: Duration = Duration::from_secs(1);
const PROPERTY_BUDGET: Duration = Duration::from_secs(10);
const EQUIVALENCE_BUDGET: Duration = Duration::from_secs(60);
/// Property cases for the cover/reciprocity suite.
const PROPERTY_CASES: usize = 1000;
/// Relative tolerance of the throughput arithmetic check.
const GPTS_RTOL: f64 = 1e-9;
/// Minimum number of malformed fixtures.
const MIN_INVALID_FIXTURES: usize = 10;

type Outcome = Result<String, String>;

/// Id, name, check and optional wall-clock budget.
type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn parse(text: &str) -> Result<Module, String> {
    parse_module(text).map_err(|e| e.to_string())
}

fn pipeline(m: &Module, p: &str) -> Result<Module, String> {
    run_pipeline(m, p).map_err(|e| format!("{p}: {e}"))
}

fn lowered(m: &Module, grid: &GridTopology, level: Level) -> Result<Module, String> {
    let mut p = format!("propagate-bounds,decompose grid={grid}");
    if matches!(level, Level::Mpi | Level::Func) {
        p.push_str(",lower-dmp-to-mpi");
    }
    if level == Level::Func {
        p.push_str(",lower-mpi-to-func");
    }
    pipeline(m, &p)
}

fn core_equal(a: &[FieldData], b: &[FieldData], core: &Bounds) -> Result<(), String> {
    ensure(a.len() == b.len(), || format!("{} vs {} fields", a.len(), b.len()))?;
    for (x, y) in a.iter().zip(b) {
        ensure(x.bitwise_eq_on(y, core), || format!("field '{}' differs, max diff {}", x.name, x.max_abs_diff(y, core)))?;
    }
    Ok(())
}

fn first_apply(m: &Module) -> Option<&Operation> {
    let mut found = None;
    m.walk(&mut |op| {
        if op.name == "stencil.apply" && found.is_none() {
            found = Some(op);
        }
    });
    found
}

fn roundtrip() -> Outcome {
    for (name, text) in [("listing 1", LISTING1), ("listing 2", LISTING2), ("listing 4", LISTING4)] {
        let m = parse(text).map_err(|e| format!("{name}: {e}"))?;
        verify_module(&m).map_err(|d| format!("{name}: {} diagnostics", d.len()))?;
        let again = parse(&print_module(&m))?;
        ensure(structurally_equal(&m, &again), || format!("{name} changed on reprint"))?;
    }
    Ok("3 listings".into())
}

fn halo_inference() -> Outcome {
    // Expected point counts per SDO for 2D and 3D.
    let expected: [(u32, i64, usize, usize); 3] = [(2, 1, 5, 7), (4, 2, 9, 13), (8, 4, 13, 19)];
    let mut failures = Vec::new();
    let mut seen = Vec::new();
    for (sdo, radius, pts2, pts3) in expected {
        for (dims, pts) in [(2usize, pts2), (3, pts3)] {
            let k = generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![16; dims], sdo)).map_err(|e| e.to_string())?;
            let apply = first_apply(&k.module).ok_or("kernel has no apply")?;
            let extent = infer_access_extent(&k.module, apply);
            if extent != vec![AccessExtent::symmetric(&vec![radius; dims])] {
                failures.push(format!("{dims}D sdo {sdo}: extent {extent:?}"));
            }
            let distinct: BTreeSet<_> = access_offsets(apply)[0].iter().cloned().collect();
            seen.push(format!("{dims}D/{sdo}:{}", distinct.len()));
            if distinct.len() != pts {
                failures.push(format!("{dims}D sdo {sdo}: {} points, expected {pts}", distinct.len()));
            }
        }
    }
    if failures.is_empty() {
        Ok(seen.join(" "))
    } else {
        Err(failures.join("; "))
    }
}

fn listing2_exchanges() -> Result<(Vec<ExchangeDecl>, Attribute), String> {
    let m = parse(LISTING2)?;
    let mut out = None;
    m.walk(&mut |op| {
        if let (Some(Attribute::Array(a)), Some(g)) = (op.attr("swaps"), op.attr("grid")) {
            let ex = a.iter().filter_map(|e| if let Attribute::Exchange(e) = e { Some(e.clone()) } else { None }).collect();
            out = Some((ex, g.clone()));
        }
    });
    out.ok_or_else(|| "listing 2 has no swap".into())
}

fn decomposition_exactness() -> Outcome {
    let (want, grid_attr) = listing2_exchanges()?;
    ensure(want.len() == 2, || format!("listing 2 has {} exchanges", want.len()))?;
    let topo = GridTopology::new(vec![2, 2]).map_err(|e| e.to_string())?;
    ensure(grid_attr == Attribute::Grid(topo.clone()), || format!("grid attribute {grid_attr}"))?;
    let core = Bounds::new(vec![0, 0], vec![100, 100]);
    let halo = AccessExtent::symmetric(&[4, 4]);
    let minus = generate_exchanges(&halo, &core, &topo, &[0, 1]);
    let plus = generate_exchanges(&halo, &core, &topo, &[0, 0]);
    let find = |set: &[ExchangeDecl], to: [i64; 2]| set.iter().find(|e| e.to == to).cloned();
    ensure(find(&minus, [0, -1]).as_ref() == Some(&want[0]), || format!("-y exchange {:?}", find(&minus, [0, -1])))?;
    ensure(find(&plus, [0, 1]).as_ref() == Some(&want[1]), || format!("+y exchange {:?}", find(&plus, [0, 1])))?;
    Ok(want.iter().map(|e| Attribute::Exchange(e.clone()).to_string()).collect::<Vec<_>>().join(" "))
}

/// Random global bounds, grid and extent in 1–3 dimensions with every core
/// at least as wide as the halo.
fn random_case(rng: &mut ChaCha8Rng) -> (Bounds, GridTopology, AccessExtent) {
    let rank = rng.gen_range(1..=3usize);
    let grid_rank = rng.gen_range(1..=rank);
    let dims: Vec<usize> = (0..grid_rank).map(|_| rng.gen_range(1..=4)).collect();
    let min: Vec<i64> = (0..rank).map(|_| rng.gen_range(-3..=0)).collect();
    let max: Vec<i64> = (0..rank).map(|_| rng.gen_range(0..=3)).collect();
    let extent = AccessExtent { min, max };
    let width = extent.halo_width();
    let lb: Vec<i64> = (0..rank).map(|_| rng.gen_range(-5..5)).collect();
    let ub = (0..rank)
        .map(|d| {
            let n = match dims.get(d) {
                Some(&p) => p as i64 * (width[d].max(1) + rng.gen_range(0..4)) + rng.gen_range(0..p as i64),
                None => 1 + rng.gen_range(0..4),
            };
            lb[d] + n
        })
        .collect();
    (Bounds::new(lb, ub), GridTopology::new(dims).unwrap(), extent)
}

fn to_global(at: &[i64], core: &Bounds, width: &[i64]) -> Vec<i64> {
    at.iter().zip(&core.lb).zip(width).map(|((a, l), w)| a - w + l).collect()
}

fn check_case(global: &Bounds, topo: &GridTopology, extent: &AccessExtent) -> Result<(), String> {
    let n = topo.num_ranks();
    let cores = (0..n).map(|r| local_bounds(global, topo, &topo.coord_of(r)).map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>()?;
    ensure(cores.iter().map(Bounds::num_points).sum::<i64>() == global.num_points(), || "cores do not cover the domain".into())?;
    for (i, a) in cores.iter().enumerate() {
        ensure(global.contains(a), || format!("{a} outside {global}"))?;
        for b in &cores[i + 1..] {
            ensure(!a.overlaps(b), || format!("{a} overlaps {b}"))?;
        }
    }
    let width = extent.halo_width();
    for r in 0..n {
        let coord = topo.coord_of(r);
        let buffer = cores[r].widen(&AccessExtent::symmetric(&width));
        for e in generate_exchanges(extent, &cores[r], topo, &coord) {
            ensure(e.fits(&buffer.shape()), || format!("{e:?} outside the buffer"))?;
            let peer = topo.neighbor_rank(&coord, &e.to).ok_or("exchange with a missing neighbour")?;
            let lo = to_global(&e.at, &cores[r], &width);
            let recv = Bounds::new(lo.clone(), lo.iter().zip(&e.size).map(|(a, s)| a + s).collect());
            ensure(!recv.overlaps(&cores[r]) && cores[peer].contains(&recv), || format!("rank {r} receives {recv} not owned by {peer}"))?;
            let back: Vec<i64> = e.to.iter().map(|t| -t).collect();
            let peer_ex = generate_exchanges(extent, &cores[peer], topo, &topo.coord_of(peer));
            let m = peer_ex.iter().find(|p| p.to == back).ok_or("no reciprocal exchange")?;
            ensure(m.size == e.size && to_global(&m.send_at(), &cores[peer], &width) == recv.lb, || format!("{m:?} does not send {recv}"))?;
        }
    }
    Ok(())
}

fn cover_and_reciprocity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..PROPERTY_CASES {
        let (g, t, e) = random_case(&mut rng);
        check_case(&g, &t, &e).map_err(|m| format!("case {i} ({g} on {t}): {m}"))?;
    }
    Ok(format!("{PROPERTY_CASES} cases"))
}

fn equivalence() -> Outcome {
    let mut configs = Vec::new();
    for sdo in [2, 4, 8] {
        for topo in ["1x1", "2x2", "1x4", "4x1", "2x4"] {
            configs.push((KernelKind::Heat, vec![64, 64], sdo, 16, topo));
        }
    }
    configs.push((KernelKind::Wave, vec![32, 32, 32], 4, 8, "2x2x2"));
    let mut runs = 0;
    for (kind, shape, sdo, t, topo) in configs {
        let k = generate_kernel(&KernelPreset::new(kind, shape, sdo)).map_err(|e| e.to_string())?;
        let serial = run_serial_stencil(&pipeline(&k.module, "propagate-bounds")?, &k.init(7), t).map_err(|e| e.to_string())?;
        let topo = GridTopology::parse(topo).map_err(|e| e.to_string())?;
        for level in [Level::Dmp, Level::Mpi, Level::Func] {
            let m = lowered(&k.module, &topo, level)?;
            let what = format!("{} sdo {sdo} on {topo} at {level:?}", kind.name());
            let dist = simulate_distributed(&m, &topo, &k.init(7), t, level, &SimOptions::default()).map_err(|e| format!("{what}: {e}"))?;
            core_equal(&serial, &dist.outputs, &k.preset.core()).map_err(|e| format!("{what}: {e}"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs bitwise equal"))
}

fn swap_elimination() -> Outcome {
    let topo = GridTopology::parse("2x2").map_err(|e| e.to_string())?;
    for (name, text, before, after) in [("two loads", TWO_LOADS, 2, 1), ("load-store-load", LOAD_STORE_LOAD, 3, 3)] {
        let m = parse(text)?;
        let base = pipeline(&m, "propagate-bounds")?;
        let init = random_init(&base, 4).map_err(|e| e.to_string())?;
        let serial = run_serial_stencil(&base, &init, 1).map_err(|e| e.to_string())?;
        let decomposed = pipeline(&m, "decompose grid=2x2")?;
        let pruned = pipeline(&decomposed, "eliminate-redundant-swaps")?;
        let counts = (decomposed.count_ops("dmp.swap"), pruned.count_ops("dmp.swap"));
        ensure(counts == (before, after), || format!("{name}: swaps {counts:?}, expected ({before}, {after})"))?;
        let core = Bounds::new(vec![0, 0], vec![32, 32]);
        let out = simulate_distributed(&pruned, &topo, &init, 1, Level::Dmp, &SimOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        core_equal(&serial, &out.outputs, &core).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok("2 -> 1 and 3 -> 3 swaps".into())
}

fn hoisting() -> Outcome {
    let k = generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![32, 32], 2)).map_err(|e| e.to_string())?;
    let topo = GridTopology::parse("2x2").map_err(|e| e.to_string())?;
    let m = lowered(&k.module, &topo, Level::Func)?;
    let stats = |t: u64| {
        simulate_distributed(&m, &topo, &k.init(1), t, Level::Func, &SimOptions::default()).map(|r| r.stats).map_err(|e| e.to_string())
    };
    let (one, many) = (stats(1)?, stats(16)?);
    ensure(one.get("func.call @MPI_Comm_rank") > 0, || "no rank query executed".into())?;
    for op in ["func.call @MPI_Comm_rank", "func.call @MPI_Comm_size", "arith.divsi", "arith.remsi", "arith.select"] {
        ensure(one.get(op) == many.get(op), || format!("{op}: {} at T=1, {} at T=16", one.get(op), many.get(op)))?;
    }
    for op in ["func.call @MPI_Isend", "func.call @MPI_Irecv", "func.call @MPI_Waitall"] {
        ensure(one.get(op) > 0 && many.get(op) == 16 * one.get(op), || format!("{op}: {} at T=1, {} at T=16", one.get(op), many.get(op)))?;
    }
    Ok(format!("{} Isend at T=1, {} at T=16", one.get("func.call @MPI_Isend"), many.get("func.call @MPI_Isend")))
}

fn verifier_negatives() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/invalid");
    let mut files: Vec<_> = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    files.sort();
    ensure(files.len() >= MIN_INVALID_FIXTURES, || format!("only {} fixtures", files.len()))?;
    for f in &files {
        let out = Command::new(env!("CARGO_BIN_EXE_xstencil")).arg("verify").arg(f).output().map_err(|e| e.to_string())?;
        let name = f.file_name().unwrap().to_string_lossy();
        ensure(!out.status.success(), || format!("{name} accepted"))?;
        ensure(!out.stderr.is_empty(), || format!("{name}: no diagnostic"))?;
    }
    Ok(format!("{} fixtures rejected", files.len()))
}

fn throughput() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_xstencil"))
        .args(["bench", "--shape", "32x32", "--shape", "48x48", "--sdo", "4", "--grid", "2x2", "-T", "4"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header: Vec<_> = lines.next().ok_or("no output")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("no column {name}"));
    let (pts, steps, secs, gpts) = (col("core_points")?, col("timesteps")?, col("seconds")?, col("gpts_per_s")?);
    let mut rows = 0;
    for line in lines {
        let f: Vec<_> = line.split(',').collect();
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| format!("{line}: {e}"));
        let want = num(pts)? * num(steps)? / num(secs)? / 1e9;
        let got = num(gpts)?;
        ensure((got - want).abs() <= GPTS_RTOL * want.abs(), || format!("{line}: {got} vs {want}"))?;
        rows += 1;
    }
    ensure(rows == 2, || format!("{rows} rows"))?;
    Ok(format!("{rows} rows"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "round-trip fidelity", roundtrip, Some(ROUNDTRIP_BUDGET)),
        (2, "halo inference", halo_inference, Some(HALO_BUDGET)),
        (3, "decomposition exactness", decomposition_exactness, None),
        (4, "cover and reciprocity", cover_and_reciprocity, Some(PROPERTY_BUDGET)),
        (5, "end-to-end equivalence", equivalence, Some(EQUIVALENCE_BUDGET)),
        (6, "redundant-swap elimination", swap_elimination, None),
        (7, "hoisting", hoisting, None),
        (8, "verifier negative suite", verifier_negatives, None),
        (9, "throughput reporting", throughput, None),
    ];
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let mut result = check();
        let took = start.elapsed();
        if let (Ok(_), Some(b)) = (&result, budget) {
            if took > b {
                result = Err(format!("took {took:.2?}, budget {b:?}"));
            }
        }
        match result {
            Ok(detail) => println!("PASS {id} {name} ({took:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id} {name} ({took:.2?}): {why}");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

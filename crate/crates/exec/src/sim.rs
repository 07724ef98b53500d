//! Deterministic multi-rank simulation.
//!
//! Every rank runs on its own thread, but only the rank holding the token
//! executes; it hands the token back to the scheduler at every
//! communication operation and whenever it blocks. The scheduler picks the
//! next rank round-robin or from a seeded shuffle, so a run is fully
//! determined by the program, the inputs and the schedule. With exact
//! (source, tag) matching and buffered sends the results do not depend on
//! the schedule at all; the seeds exist to check that.

use std::sync::{Condvar, Mutex, MutexGuard};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xstencil_core::dmp::{local_bounds, GridTopology};
use xstencil_core::ir::{Attribute, Module, Operation};
use xstencil_core::mpi::AbiTable;
use xstencil_core::stencil::Bounds;

use crate::comm::{Comm, Transport};
use crate::data::{copy_box, Data, FieldData};
use crate::interp::Interp;
use crate::program::{Func, Program};
use crate::run::{buffer_args, invoke, OpStats, RawOutput};
use crate::{BlockedRank, ExecError};

/// The abstraction level a module is simulated at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    /// `dmp.swap` interpreted natively.
    Dmp,
    /// mpi dialect ops.
    Mpi,
    /// Calls of the C MPI interface dispatched to the runtime.
    Func,
}

impl Level {
    pub fn parse(s: &str) -> Option<Level> {
        match s {
            "dmp" => Some(Level::Dmp),
            "mpi" => Some(Level::Mpi),
            "func" => Some(Level::Func),
            _ => None,
        }
    }

    fn of_op(op: &Operation) -> Option<Level> {
        let is_call = op.name == "func.call" && matches!(op.attr("callee"), Some(Attribute::Symbol(s)) if s.starts_with("MPI_"));
        if op.name == "dmp.swap" {
            Some(Level::Dmp)
        } else if op.name.starts_with("mpi.") {
            Some(Level::Mpi)
        } else if is_call {
            Some(Level::Func)
        } else {
            None
        }
    }

    /// The level of the first communication op; `Dmp` for modules without
    /// any.
    pub fn detect(m: &Module) -> Level {
        let mut found = None;
        m.walk(&mut |op| {
            if found.is_none() {
                found = Level::of_op(op);
            }
        });
        found.unwrap_or(Level::Dmp)
    }

    /// Checks that `m` contains no communication ops of another level.
    pub fn check(self, m: &Module) -> Result<(), ExecError> {
        let mut offending: Option<String> = None;
        m.walk(&mut |op| {
            if let Some(l) = Level::of_op(op) {
                if l != self && offending.is_none() {
                    offending = Some(format!("{} belongs to the {l:?} level", op.describe()));
                }
            }
        });
        match offending {
            Some(o) => Err(ExecError::Input(format!("module is not at the {self:?} level: {o}"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Schedule {
    #[default]
    RoundRobin,
    /// Ranks are resumed in a fresh random order every round.
    Seeded(u64),
}

#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    pub schedule: Schedule,
    pub abi: AbiTable,
}

#[derive(Clone, Debug)]
pub struct SimReport {
    /// Gathered global fields.
    pub outputs: Vec<FieldData>,
    /// Dynamic op counts summed over ranks.
    pub stats: OpStats,
    pub per_rank: Vec<OpStats>,
    pub messages: u64,
    pub elements_sent: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum Status {
    Ready,
    Blocked(String),
    Done,
    Failed,
}

struct State {
    current: Option<usize>,
    status: Vec<Status>,
    transport: Transport,
    abort: bool,
    progress: u64,
}

struct Shared {
    state: Mutex<State>,
    cv: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

struct ThreadComm<'s> {
    rank: usize,
    size: usize,
    shared: &'s Shared,
}

impl ThreadComm<'_> {
    /// Records `status`, returns the token and waits for the next turn.
    fn hand_back<'g>(&'g self, mut st: MutexGuard<'g, State>, status: Status) -> Result<MutexGuard<'g, State>, ExecError> {
        st.status[self.rank] = status;
        st.current = None;
        self.shared.cv.notify_all();
        self.wait_turn(st)
    }

    fn wait_turn<'g>(&'g self, mut st: MutexGuard<'g, State>) -> Result<MutexGuard<'g, State>, ExecError> {
        while st.current != Some(self.rank) && !st.abort {
            st = self.shared.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if st.abort {
            return Err(ExecError::Aborted);
        }
        Ok(st)
    }
}

impl Comm for ThreadComm<'_> {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.size
    }

    fn send(&mut self, dest: usize, tag: i64, data: Data) -> Result<(), ExecError> {
        let mut st = self.shared.lock();
        st.transport.push(self.rank, dest, tag, data);
        st.progress += 1;
        Ok(())
    }

    fn recv(&mut self, src: usize, tag: i64, seq: u64, waiting_in: &str) -> Result<Data, ExecError> {
        let mut st = self.shared.lock();
        loop {
            if let Some(d) = st.transport.take(src, self.rank, tag, seq) {
                st.progress += 1;
                st.status[self.rank] = Status::Ready;
                return Ok(d);
            }
            st = self.hand_back(st, Status::Blocked(waiting_in.to_string()))?;
        }
    }

    fn try_recv(&mut self, src: usize, tag: i64, seq: u64) -> Result<Option<Data>, ExecError> {
        let mut st = self.shared.lock();
        let d = st.transport.take(src, self.rank, tag, seq);
        if d.is_some() {
            st.progress += 1;
        }
        Ok(d)
    }

    fn yield_point(&mut self) -> Result<(), ExecError> {
        let st = self.shared.lock();
        drop(self.hand_back(st, Status::Ready)?);
        Ok(())
    }
}

/// Per-rank placement of the decomposed domain.
struct Placement {
    /// Global coordinate of local coordinate 0 in each grid dimension.
    origin: Vec<i64>,
    /// The rank's core in global coordinates.
    core: Bounds,
}

fn placement(func: &Func, topo: &GridTopology, rank: usize) -> Result<Placement, ExecError> {
    let domain = func.domain.as_ref().ok_or_else(|| ExecError::Input(format!("@{} carries no dmp.domain", func.name)))?;
    let coord = topo.coord_of(rank);
    let core = local_bounds(domain, topo, &coord).map_err(|e| ExecError::Input(e.to_string()))?;
    Ok(Placement { origin: core.lb[..topo.rank()].to_vec(), core })
}

impl Placement {
    /// Shift from local to global coordinates.
    fn shift(&self, rank: usize) -> Vec<i64> {
        (0..rank).map(|d| self.origin.get(d).copied().unwrap_or(0)).collect()
    }
}

/// Copies the part of `global` visible through the local window `local`
/// (translated by `shift`) into a fresh local array; points outside the
/// global field are zero.
pub fn scatter(global: &FieldData, local: &Bounds, shift: &[i64]) -> Result<Data, ExecError> {
    let mut out = Data::zeros(global.elem(), local.num_points() as usize);
    let window = local.translate(shift);
    let Some(common) = intersect(&window, &global.bounds) else { return Ok(out) };
    let src_at: Vec<i64> = common.lb.iter().zip(&global.bounds.lb).map(|(a, b)| a - b).collect();
    let dst_at: Vec<i64> = common.lb.iter().zip(&window.lb).map(|(a, b)| a - b).collect();
    copy_box(&global.data, &global.bounds.shape(), &src_at, &mut out, &local.shape(), &dst_at, &common.shape()).map_err(ExecError::Input)?;
    Ok(out)
}

/// Writes `region` (global coordinates) of a local array into `global`.
pub fn gather_into(global: &mut FieldData, local: &Data, local_bounds: &Bounds, shift: &[i64], region: &Bounds) -> Result<(), ExecError> {
    let window = local_bounds.translate(shift);
    if !window.contains(region) || !global.bounds.contains(region) {
        return Err(ExecError::Input(format!("gather region {region} is outside {window} or {}", global.bounds)));
    }
    let src_at: Vec<i64> = region.lb.iter().zip(&window.lb).map(|(a, b)| a - b).collect();
    let dst_at: Vec<i64> = region.lb.iter().zip(&global.bounds.lb).map(|(a, b)| a - b).collect();
    let shape = global.bounds.shape();
    copy_box(local, &local_bounds.shape(), &src_at, &mut global.data, &shape, &dst_at, &region.shape()).map_err(ExecError::Input)
}

fn intersect(a: &Bounds, b: &Bounds) -> Option<Bounds> {
    let lb: Vec<i64> = a.lb.iter().zip(&b.lb).map(|(x, y)| *x.max(y)).collect();
    let ub: Vec<i64> = a.ub.iter().zip(&b.ub).map(|(x, y)| *x.min(y)).collect();
    lb.iter().zip(&ub).all(|(l, u)| l < u).then(|| Bounds::new(lb, ub))
}

/// The region of a local buffer a rank owns, in global coordinates: its
/// core along the decomposed dimensions, the whole buffer elsewhere.
fn owned_region(local: &Bounds, p: &Placement, grid_rank: usize) -> Bounds {
    let shift = p.shift(local.rank());
    let window = local.translate(&shift);
    let mut lb = window.lb.clone();
    let mut ub = window.ub.clone();
    let n = grid_rank.min(local.rank());
    lb[..n].copy_from_slice(&p.core.lb[..n]);
    ub[..n].copy_from_slice(&p.core.ub[..n]);
    Bounds::new(lb, ub)
}

/// Runs a decomposed module on `topo.num_ranks()` simulated ranks and
/// gathers the global result.
pub fn simulate_distributed(
    m: &Module,
    topo: &GridTopology,
    init_global: &[FieldData],
    timesteps: u64,
    level: Level,
    opts: &SimOptions,
) -> Result<SimReport, ExecError> {
    level.check(m)?;
    let prog = Program::compile(m)?;
    let func = prog.entry().ok_or_else(|| ExecError::Input("module has no function to run".into()))?;
    match &func.grid {
        Some(g) if g == topo => {}
        Some(g) => return Err(ExecError::Input(format!("@{} was decomposed for grid {g}, not {topo}", func.name))),
        None => return Err(ExecError::Input(format!("@{} has not been decomposed (no dmp.grid)", func.name))),
    }
    let reference = func
        .reference
        .as_deref()
        .and_then(|r| prog.func(r))
        .ok_or_else(|| ExecError::Input(format!("@{} has no serial reference describing the global fields", func.name)))?;

    // Global inputs line up with the buffer arguments of the reference.
    let global_args = buffer_args(reference);
    let local_args = buffer_args(func);
    if global_args != local_args || init_global.len() != global_args.len() {
        return Err(ExecError::Input(format!("@{} takes {} field(s), {} given", func.name, local_args.len(), init_global.len())));
    }
    for (f, &i) in init_global.iter().zip(&global_args) {
        let want = reference.arg_bounds[i].as_ref().unwrap();
        if &f.bounds != want {
            return Err(ExecError::Input(format!("field '{}' covers {} but the global field is {want}", f.name, f.bounds)));
        }
    }

    let n = topo.num_ranks();
    let placements = (0..n).map(|r| placement(func, topo, r)).collect::<Result<Vec<_>, _>>()?;
    let mut rank_inputs = Vec::with_capacity(n);
    for p in &placements {
        let mut fields = Vec::new();
        for (g, &i) in init_global.iter().zip(&local_args) {
            let local = func.arg_bounds[i].as_ref().unwrap();
            fields.push(scatter(g, local, &p.shift(local.rank()))?);
        }
        rank_inputs.push(fields);
    }

    let shared = Shared {
        state: Mutex::new(State {
            current: None,
            status: vec![Status::Ready; n],
            transport: Transport::default(),
            abort: false,
            progress: 0,
        }),
        cv: Condvar::new(),
    };
    type RankResult = Result<(Vec<RawOutput>, Vec<u64>), ExecError>;
    let mut results: Vec<RankResult> = std::thread::scope(|s| {
        let handles: Vec<_> = rank_inputs
            .into_iter()
            .enumerate()
            .map(|(rank, fields)| {
                let (prog, shared, abi) = (&prog, &shared, &opts.abi);
                std::thread::Builder::new()
                    .name(format!("rank{rank}"))
                    .spawn_scoped(s, move || -> RankResult {
                        let mut comm = ThreadComm { rank, size: n, shared };
                        let r = (|| {
                            drop(comm.wait_turn(shared.lock())?);
                            let mut it = Interp::new(prog, abi, &mut comm);
                            let out = invoke(&mut it, func, fields, timesteps)?;
                            Ok((out, it.counts))
                        })();
                        let mut st = shared.lock();
                        st.status[rank] = if r.is_ok() { Status::Done } else { Status::Failed };
                        st.progress += 1;
                        st.current = None;
                        shared.cv.notify_all();
                        r
                    })
                    .expect("spawn rank thread")
            })
            .collect();
        let sched = schedule(&shared, n, opts.schedule);
        let mut results: Vec<RankResult> = handles.into_iter().map(|h| h.join().unwrap_or(Err(ExecError::Aborted))).collect();
        if let Err(e) = sched {
            results.push(Err(e));
        }
        results
    });

    // Report the root cause: a deadlock or the first failing rank.
    if results.len() > n {
        return Err(results.pop().unwrap().unwrap_err());
    }
    let mut outs = Vec::with_capacity(n);
    let mut per_rank = Vec::with_capacity(n);
    for (rank, r) in results.into_iter().enumerate() {
        match r {
            Ok((o, counts)) => {
                outs.push(o);
                per_rank.push(OpStats::from_counts(&prog, &counts));
            }
            Err(ExecError::Aborted) => {}
            Err(e) => return Err(ExecError::Rank { rank, source: Box::new(e) }),
        }
    }
    if outs.len() != n {
        return Err(ExecError::Aborted);
    }

    // Gather: start from the initial data of the argument each output
    // aliases and overwrite the owned regions of every rank.
    let mut outputs = Vec::new();
    for (k, first) in outs[0].iter().enumerate() {
        let (bounds, base) = match first.alias {
            Some(a) => {
                let pos = global_args.iter().position(|&i| i == a).unwrap();
                (init_global[pos].bounds.clone(), Some(&init_global[pos]))
            }
            None => return Err(ExecError::Input(format!("output '{}' is not one of the field arguments", first.name))),
        };
        let mut g = match base {
            Some(b) => b.clone(),
            None => FieldData::zeros(first.name.clone(), bounds, first.data.elem()),
        };
        g.name = first.name.clone();
        for (rank, o) in outs.iter().enumerate() {
            let o = &o[k];
            if o.alias != first.alias {
                return Err(ExecError::Input(format!("output '{}' aliases different arguments on different ranks", first.name)));
            }
            let region = owned_region(&o.bounds, &placements[rank], topo.rank());
            let shift = placements[rank].shift(o.bounds.rank());
            gather_into(&mut g, &o.data, &o.bounds, &shift, &region)?;
        }
        outputs.push(g);
    }
    let mut stats = OpStats::default();
    for s in &per_rank {
        stats.merge(s);
    }
    let st = shared.lock();
    Ok(SimReport { outputs, stats, per_rank, messages: st.transport.messages, elements_sent: st.transport.elements })
}

/// Hands the token around until every rank finishes, one fails, or no rank
/// can make progress.
fn schedule(shared: &Shared, n: usize, schedule: Schedule) -> Result<(), ExecError> {
    let mut rng = match schedule {
        Schedule::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Schedule::RoundRobin => None,
    };
    let abort = |mut st: MutexGuard<'_, State>| {
        st.abort = true;
        shared.cv.notify_all();
    };
    loop {
        let st = shared.lock();
        if st.status.contains(&Status::Failed) {
            abort(st);
            return Ok(());
        }
        let mut live: Vec<usize> = (0..n).filter(|&r| matches!(st.status[r], Status::Ready | Status::Blocked(_))).collect();
        if live.is_empty() {
            return Ok(());
        }
        let before = st.progress;
        let mut any_ready = false;
        drop(st);
        if let Some(rng) = rng.as_mut() {
            live.shuffle(rng);
        }
        for r in live {
            let mut st = shared.lock();
            any_ready |= st.status[r] == Status::Ready;
            st.current = Some(r);
            shared.cv.notify_all();
            while st.current == Some(r) {
                st = shared.cv.wait(st).unwrap_or_else(|e| e.into_inner());
            }
            if st.status[r] == Status::Failed {
                abort(st);
                return Ok(());
            }
        }
        let st = shared.lock();
        if !any_ready && st.progress == before {
            let blocked = st
                .status
                .iter()
                .enumerate()
                .filter_map(|(rank, s)| match s {
                    Status::Blocked(w) => Some(BlockedRank { rank, waiting_in: w.clone() }),
                    _ => None,
                })
                .collect();
            abort(st);
            return Err(ExecError::Deadlock { blocked });
        }
    }
}

//! Single-rank execution: the serial stencil oracle and the loop-level
//! interpreter.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xstencil_core::ir::{Module, Type};
use xstencil_core::mpi::AbiTable;
use xstencil_core::stencil::Bounds;

use crate::comm::LocalComm;
use crate::data::{Data, Elem, FieldData};
use crate::interp::{Interp, Val};
use crate::program::{Func, Program};
use crate::ExecError;

/// Dynamic execution counts by op name (`func.call @X` for calls).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpStats {
    pub counts: BTreeMap<String, u64>,
}

impl OpStats {
    pub(crate) fn from_counts(prog: &Program, counts: &[u64]) -> Self {
        let mut s = OpStats::default();
        for (name, &n) in prog.stat_names.iter().zip(counts) {
            if n > 0 {
                *s.counts.entry(name.clone()).or_default() += n;
            }
        }
        s
    }

    pub fn get(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &OpStats) {
        for (k, v) in &other.counts {
            *self.counts.entry(k.clone()).or_default() += v;
        }
    }
}

impl fmt::Display for OpStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.counts {
            writeln!(f, "{v:>12}  {k}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub outputs: Vec<FieldData>,
    pub stats: OpStats,
}

/// One output buffer of an invocation.
#[derive(Debug)]
pub(crate) struct RawOutput {
    pub data: Data,
    pub bounds: Bounds,
    /// Argument whose buffer this is.
    pub alias: Option<usize>,
    pub name: String,
}

/// Indices of the buffer arguments of `func`, in order.
pub(crate) fn buffer_args(func: &Func) -> Vec<usize> {
    (0..func.inputs.len()).filter(|&i| func.arg_bounds[i].is_some()).collect()
}

/// Calls `func` with one data array per buffer argument. A trailing `index`
/// argument receives the timestep count and the function is called once;
/// otherwise it is called `timesteps` times on the same buffers. Results
/// are returned when the function has any, else the buffer arguments.
pub(crate) fn invoke<'p>(it: &mut Interp<'p, '_>, func: &'p Func, mut fields: Vec<Data>, timesteps: u64) -> Result<Vec<RawOutput>, ExecError> {
    let n = func.inputs.len();
    let time_arg = n > 0 && func.inputs[n - 1] == Type::Index;
    let mut args = Vec::with_capacity(n);
    let mut arg_ids = vec![None; n];
    fields.reverse();
    for (i, ty) in func.inputs.iter().enumerate() {
        if let Some(b) = &func.arg_bounds[i] {
            let data = fields.pop().ok_or_else(|| ExecError::Input(format!("missing data for argument '{}'", func.arg_names[i])))?;
            if data.len() as i64 != b.num_points() {
                return Err(ExecError::Input(format!(
                    "argument '{}' covers {b} ({} points) but the data has {} values",
                    func.arg_names[i],
                    b.num_points(),
                    data.len()
                )));
            }
            let want = ty.element_type().and_then(crate::data::Elem::of);
            if want != Some(data.elem()) {
                return Err(ExecError::Input(format!("argument '{}' has element type {ty}, data is {:?}", func.arg_names[i], data.elem())));
            }
            let id = it.alloc(b.shape(), data);
            arg_ids[i] = Some(id);
            args.push(Val::Buf(id));
        } else if time_arg && i == n - 1 {
            args.push(Val::S(crate::data::Scalar::Int(timesteps as i64)));
        } else {
            return Err(ExecError::Input(format!("cannot pass argument '{}' of type {ty}", func.arg_names[i])));
        }
    }
    if !fields.is_empty() {
        return Err(ExecError::Input(format!("{} more field(s) given than @{} takes", fields.len(), func.name)));
    }
    let calls = if time_arg { 1 } else { timesteps };
    let mut results = Vec::new();
    for _ in 0..calls {
        results = it.call(func, args.clone())?;
    }
    let mut out = Vec::new();
    let read = |it: &Interp<'_, '_>, id: u32, name: String| -> Result<RawOutput, ExecError> {
        let alias = arg_ids.iter().position(|a| *a == Some(id));
        let buf = it.buffer(id).ok_or_else(|| ExecError::Input(format!("output '{name}' was deallocated")))?;
        let bounds = match alias {
            Some(a) => func.arg_bounds[a].clone().unwrap(),
            None => Bounds::from_shape(&buf.shape),
        };
        Ok(RawOutput { data: buf.data.clone(), bounds, alias, name })
    };
    if !func.results.is_empty() && calls > 0 {
        for (k, v) in results.iter().enumerate() {
            if let Val::Buf(id) = v {
                let name = func.arg_names.get(k).cloned().unwrap_or_else(|| format!("result{k}"));
                out.push(read(it, *id, name)?);
            }
        }
    } else {
        for (i, id) in arg_ids.iter().enumerate() {
            if let Some(id) = id {
                out.push(read(it, *id, func.arg_names[i].clone())?);
            }
        }
    }
    Ok(out)
}

fn run_single(prog: &Program, func: &Func, init: &[FieldData], timesteps: u64) -> Result<RunReport, ExecError> {
    let bufs = buffer_args(func);
    if init.len() != bufs.len() {
        return Err(ExecError::Input(format!("@{} takes {} field(s), {} given", func.name, bufs.len(), init.len())));
    }
    for (f, &i) in init.iter().zip(&bufs) {
        let want = func.arg_bounds[i].as_ref().unwrap();
        if &f.bounds != want {
            return Err(ExecError::Input(format!("field '{}' covers {} but argument '{}' expects {want}", f.name, f.bounds, func.arg_names[i])));
        }
    }
    let abi = AbiTable::mpich();
    let mut comm = LocalComm::default();
    let mut it = Interp::new(prog, &abi, &mut comm);
    let raw = invoke(&mut it, func, init.iter().map(|f| f.data.clone()).collect(), timesteps)?;
    let stats = OpStats::from_counts(prog, &it.counts);
    let outputs = raw.into_iter().map(|r| FieldData { name: r.name, bounds: r.bounds, data: r.data }).collect();
    Ok(RunReport { outputs, stats })
}

/// Interprets the stencil program directly: the ground truth every other
/// level is compared with. For a decomposed module the embedded serial
/// reference is run.
pub fn run_serial_stencil(m: &Module, init: &[FieldData], timesteps: u64) -> Result<Vec<FieldData>, ExecError> {
    run_serial_report(m, init, timesteps).map(|r| r.outputs)
}

pub fn run_serial_report(m: &Module, init: &[FieldData], timesteps: u64) -> Result<RunReport, ExecError> {
    let prog = Program::compile(m)?;
    let entry = prog.entry().ok_or_else(|| ExecError::Input("module has no function to run".into()))?;
    let func = match &entry.reference {
        Some(r) => prog.func(r).ok_or_else(|| ExecError::Input(format!("serial reference @{r} is missing")))?,
        None => entry,
    };
    run_single(&prog, func, init, timesteps)
}

/// Interprets a module lowered to loops over memrefs. Field data is
/// matched to the buffer arguments by their recorded logical bounds.
pub fn run_loops(m: &Module, init: &[FieldData], timesteps: u64) -> Result<Vec<FieldData>, ExecError> {
    let prog = Program::compile(m)?;
    let entry = prog.entry().ok_or_else(|| ExecError::Input("module has no function to run".into()))?;
    let mut stencil_op = None;
    for f in m.functions() {
        if f.symbol_name() == Some(entry.name.as_str()) {
            f.walk(&mut |op| {
                if op.dialect() == "stencil" && stencil_op.is_none() {
                    stencil_op = Some(op.describe());
                }
            });
        }
    }
    if let Some(op) = stencil_op {
        return Err(ExecError::Input(format!("@{} still contains stencil ops ({op}); lower it to loops first", entry.name)));
    }
    run_single(&prog, entry, init, timesteps).map(|r| r.outputs)
}

/// Seeded uniform data in [0, 1) for every global field of the module's
/// entry function (its serial reference when decomposed).
pub fn random_init(m: &Module, seed: u64) -> Result<Vec<FieldData>, ExecError> {
    let prog = Program::compile(m)?;
    let entry = prog.entry().ok_or_else(|| ExecError::Input("module has no function to run".into()))?;
    let func = match &entry.reference {
        Some(r) => prog.func(r).ok_or_else(|| ExecError::Input(format!("serial reference @{r} is missing")))?,
        None => entry,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    buffer_args(func)
        .into_iter()
        .map(|i| {
            let ty = &func.inputs[i];
            let elem = ty
                .element_type()
                .and_then(Elem::of)
                .ok_or_else(|| ExecError::Unsupported(format!("argument '{}' of type {ty}", func.arg_names[i])))?;
            let bounds = func.arg_bounds[i].clone().unwrap();
            Ok(FieldData::from_fn(func.arg_names[i].clone(), bounds, elem, |_| rng.gen::<f64>()))
        })
        .collect()
}

//! A pre-decoded form of the IR the interpreter walks: op names resolved to
//! an enum, attributes parsed once, values addressed by dense index.

use std::collections::HashMap;

use xstencil_core::dmp::ops::{swap_exchanges, swap_grid};
use xstencil_core::dmp::{ExchangeDecl, GridTopology, DOMAIN_ATTR, GRID_ATTR, REFERENCE_ATTR};
use xstencil_core::ir::{Attribute, Location, Module, Operation, Region, Type};
use xstencil_core::stencil::ops::{access_offset, store_bounds};
use xstencil_core::stencil::{arg_name, Bounds, ARG_BOUNDS_ATTR, SERIAL_REFERENCE_ATTR};

use crate::data::{Elem, Scalar};
use crate::ExecError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Width {
    I1,
    I32,
    I64,
}

impl Width {
    fn of(ty: &Type) -> Option<Width> {
        match ty {
            Type::I1 => Some(Width::I1),
            Type::I32 => Some(Width::I32),
            Type::I64 | Type::Index => Some(Width::I64),
            _ => None,
        }
    }

    pub fn wrap(self, v: i64) -> i64 {
        match self {
            Width::I1 => v & 1,
            Width::I32 => i64::from(v as i32),
            Width::I64 => v,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum FBin {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum IBin {
    Add,
    Sub,
    Mul,
    DivS,
    RemS,
    And,
    Or,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Pred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
    Ult,
    Ule,
    Ugt,
    Uge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum MpiOp {
    Init,
    Finalize,
    CommRank,
    CommSize,
    Unwrap,
    Send,
    Recv,
    Isend,
    Irecv,
    Wait,
    Test,
    Waitall,
    Reduce,
    Allreduce,
    Bcast,
    Gather,
}

#[derive(Debug)]
pub(crate) enum Kind {
    Const(Scalar),
    FBin(FBin),
    NegF,
    IBin(IBin, Width),
    CmpI(Pred, Width),
    Select,
    IndexCast(Width),
    SiToFp(Elem),
    Cast,
    For,
    If,
    Yield,
    Return,
    /// Call of a function defined in the module (its index in `funcs`) or
    /// of an external by name.
    Call(Option<usize>, String),
    Alloc(Vec<i64>, Elem),
    Dealloc,
    MLoad,
    MStore,
    ExtractPtr,
    IntToPtr,
    SLoad { field_lb: Vec<i64>, bounds: Bounds },
    Apply { domain: Bounds, elems: Vec<Elem> },
    /// Access of region argument `arg` of the enclosing apply; `slot` is the
    /// ordinal among the accesses of that apply.
    Access { arg: usize, offset: Vec<i64>, slot: usize },
    SReturn,
    SStore { field_lb: Vec<i64>, bounds: Bounds },
    Swap { grid: GridTopology, exchanges: Vec<ExchangeDecl> },
    Mpi(MpiOp, Option<String>),
    Unsupported,
}

#[derive(Debug)]
pub(crate) struct Node {
    pub kind: Kind,
    pub operands: Vec<u32>,
    pub results: Vec<u32>,
    pub regions: Vec<Block>,
    /// Index into [`Program::stat_names`].
    pub stat: usize,
    pub name: String,
    pub location: Option<Location>,
}

impl Node {
    pub fn describe(&self) -> String {
        match self.location {
            Some(l) => format!("'{}' at {}:{}", self.name, l.line, l.col),
            None => format!("'{}'", self.name),
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct Block {
    pub args: Vec<u32>,
    pub ops: Vec<Node>,
}

#[derive(Debug)]
pub(crate) struct Func {
    pub name: String,
    pub body: Block,
    pub inputs: Vec<Type>,
    pub results: Vec<Type>,
    /// Logical bounds of every buffer argument (from the field type or the
    /// recorded bounds of a lowered field).
    pub arg_bounds: Vec<Option<Bounds>>,
    pub arg_names: Vec<String>,
    pub grid: Option<GridTopology>,
    pub domain: Option<Bounds>,
    /// The embedded serial copy of a decomposed function.
    pub reference: Option<String>,
    pub is_serial_reference: bool,
}

/// A module compiled for execution. Shared read-only between ranks.
#[derive(Debug)]
pub struct Program {
    pub(crate) funcs: Vec<Func>,
    pub(crate) by_name: HashMap<String, usize>,
    pub(crate) stat_names: Vec<String>,
    pub(crate) num_values: usize,
    /// Largest number of accesses in one apply body.
    pub(crate) max_access_slots: usize,
}

impl Program {
    pub fn compile(m: &Module) -> Result<Program, ExecError> {
        let mut c = Compiler { m, stats: HashMap::new(), stat_names: Vec::new(), by_name: HashMap::new(), max_slots: 0 };
        for (i, f) in m.functions().filter(|f| !f.regions.is_empty()).enumerate() {
            c.by_name.insert(f.symbol_name().unwrap_or_default().to_string(), i);
        }
        let mut funcs = Vec::new();
        for f in m.functions().filter(|f| !f.regions.is_empty()) {
            let ft = xstencil_core::dialects::function_type(f)
                .ok_or_else(|| ExecError::Unsupported(format!("{} has no signature", f.describe())))?;
            let recorded = match f.attr(ARG_BOUNDS_ATTR) {
                Some(Attribute::Array(items)) => items.clone(),
                _ => Vec::new(),
            };
            let arg_bounds = ft
                .inputs
                .iter()
                .enumerate()
                .map(|(i, t)| match (t, recorded.get(i)) {
                    (Type::Field(f), _) => Some(f.bounds.clone()),
                    (Type::MemRef(_), Some(Attribute::Bounds(b))) => Some(b.clone()),
                    (Type::MemRef(m), _) => Some(Bounds::from_shape(&m.shape)),
                    _ => None,
                })
                .collect();
            funcs.push(Func {
                name: f.symbol_name().unwrap_or_default().to_string(),
                body: c.block(&f.regions[0], None)?,
                inputs: ft.inputs.clone(),
                results: ft.results.clone(),
                arg_bounds,
                arg_names: (0..ft.inputs.len()).map(|i| arg_name(f, i)).collect(),
                grid: match f.attr(GRID_ATTR) {
                    Some(Attribute::Grid(g)) => Some(g.clone()),
                    _ => None,
                },
                domain: match f.attr(DOMAIN_ATTR) {
                    Some(Attribute::Bounds(b)) => Some(b.clone()),
                    _ => None,
                },
                reference: match f.attr(REFERENCE_ATTR) {
                    Some(Attribute::Symbol(s)) => Some(s.clone()),
                    _ => None,
                },
                is_serial_reference: f.attr(SERIAL_REFERENCE_ATTR).is_some(),
            });
        }
        Ok(Program {
            funcs,
            by_name: c.by_name,
            stat_names: c.stat_names,
            num_values: m.values.len(),
            max_access_slots: c.max_slots,
        })
    }

    pub(crate) fn func(&self, name: &str) -> Option<&Func> {
        self.by_name.get(name).map(|&i| &self.funcs[i])
    }

    /// The function a driver runs: the first one that is not an embedded
    /// serial reference.
    pub(crate) fn entry(&self) -> Option<&Func> {
        self.funcs.iter().find(|f| !f.is_serial_reference)
    }
}

struct Compiler<'m> {
    m: &'m Module,
    stats: HashMap<String, usize>,
    stat_names: Vec<String>,
    by_name: HashMap<String, usize>,
    max_slots: usize,
}

/// Region arguments of the apply being compiled and the running count of
/// its accesses.
struct ApplyCtx {
    args: Vec<u32>,
    slots: usize,
}

impl Compiler<'_> {
    fn stat(&mut self, name: String) -> usize {
        if let Some(&i) = self.stats.get(&name) {
            return i;
        }
        let i = self.stat_names.len();
        self.stat_names.push(name.clone());
        self.stats.insert(name, i);
        i
    }

    fn ty(&self, v: u32) -> &Type {
        self.m.values.ty(xstencil_core::ir::ValueId(v))
    }

    fn block(&mut self, r: &Region, mut apply: Option<&mut ApplyCtx>) -> Result<Block, ExecError> {
        let mut ops = Vec::with_capacity(r.ops.len());
        for op in &r.ops {
            ops.push(self.node(op, apply.as_deref_mut())?);
        }
        Ok(Block { args: r.args.iter().map(|v| v.0).collect(), ops })
    }

    fn node(&mut self, op: &Operation, apply: Option<&mut ApplyCtx>) -> Result<Node, ExecError> {
        let operands: Vec<u32> = op.operands.iter().map(|v| v.0).collect();
        let results: Vec<u32> = op.results.iter().map(|v| v.0).collect();
        let bad = |what: &str| ExecError::Unsupported(format!("{}: {what}", op.describe()));
        let res_ty = |i: usize| op.results.get(i).map(|v| self.m.values.ty(*v));
        let width = |t: Option<&Type>| t.and_then(Width::of).ok_or_else(|| bad("expected an integer type"));
        let field_lb = |v: u32| match self.ty(v) {
            Type::Field(f) => Ok(f.bounds.lb.clone()),
            Type::MemRef(m) => Ok(vec![0; m.shape.len()]),
            t => Err(bad(&format!("expected a buffer, found {t}"))),
        };

        let mut regions = Vec::new();
        let kind = match op.name.as_str() {
            "arith.constant" => match op.attr("value") {
                Some(Attribute::Int { value, ty }) => Scalar::Int(Width::of(ty).ok_or_else(|| bad("bad constant type"))?.wrap(*value)),
                Some(Attribute::Float { value, ty: Type::F32 }) => Scalar::F32(*value as f32),
                Some(Attribute::Float { value, .. }) => Scalar::F64(*value),
                _ => return Err(bad("malformed constant")),
            }
            .into(),
            "arith.addf" => Kind::FBin(FBin::Add),
            "arith.subf" => Kind::FBin(FBin::Sub),
            "arith.mulf" => Kind::FBin(FBin::Mul),
            "arith.divf" => Kind::FBin(FBin::Div),
            "arith.maxf" => Kind::FBin(FBin::Max),
            "arith.minf" => Kind::FBin(FBin::Min),
            "arith.negf" => Kind::NegF,
            n @ ("arith.addi" | "arith.subi" | "arith.muli" | "arith.divsi" | "arith.remsi" | "arith.andi" | "arith.ori") => {
                let o = match n {
                    "arith.addi" => IBin::Add,
                    "arith.subi" => IBin::Sub,
                    "arith.muli" => IBin::Mul,
                    "arith.divsi" => IBin::DivS,
                    "arith.remsi" => IBin::RemS,
                    "arith.andi" => IBin::And,
                    _ => IBin::Or,
                };
                Kind::IBin(o, width(res_ty(0))?)
            }
            "arith.cmpi" => {
                let p = match op.attr("predicate").and_then(|a| a.as_str()) {
                    Some("eq") => Pred::Eq,
                    Some("ne") => Pred::Ne,
                    Some("slt") => Pred::Slt,
                    Some("sle") => Pred::Sle,
                    Some("sgt") => Pred::Sgt,
                    Some("sge") => Pred::Sge,
                    Some("ult") => Pred::Ult,
                    Some("ule") => Pred::Ule,
                    Some("ugt") => Pred::Ugt,
                    Some("uge") => Pred::Uge,
                    _ => return Err(bad("unknown predicate")),
                };
                Kind::CmpI(p, width(op.operands.first().map(|v| self.m.values.ty(*v)))?)
            }
            "arith.select" => Kind::Select,
            "arith.index_cast" => Kind::IndexCast(width(res_ty(0))?),
            "arith.sitofp" => Kind::SiToFp(res_ty(0).and_then(Elem::of).ok_or_else(|| bad("bad result type"))?),
            "builtin.unrealized_conversion_cast" => Kind::Cast,
            "scf.for" => {
                regions.push(self.block(&op.regions[0], None)?);
                Kind::For
            }
            "scf.if" => {
                for r in &op.regions {
                    regions.push(self.block(r, None)?);
                }
                Kind::If
            }
            "scf.yield" => Kind::Yield,
            "func.return" => Kind::Return,
            "func.call" => {
                let callee = match op.attr("callee") {
                    Some(Attribute::Symbol(s)) => s.clone(),
                    _ => return Err(bad("missing callee")),
                };
                Kind::Call(self.by_name.get(&callee).copied(), callee)
            }
            "memref.alloc" => {
                let m = res_ty(0).and_then(Type::as_memref).ok_or_else(|| bad("alloc must produce a memref"))?;
                Kind::Alloc(m.shape.clone(), Elem::of(&m.elem).ok_or_else(|| bad("unsupported element type"))?)
            }
            "memref.dealloc" => Kind::Dealloc,
            "memref.load" => Kind::MLoad,
            "memref.store" => Kind::MStore,
            "memref.extract_aligned_pointer_as_index" => Kind::ExtractPtr,
            "llvm.inttoptr" => Kind::IntToPtr,
            "stencil.load" => {
                let t = res_ty(0).and_then(Type::as_temp).ok_or_else(|| bad("load must produce a temp"))?;
                let bounds = t.bounds.clone().ok_or_else(|| bad("temp bounds are unknown; run propagate-bounds first"))?;
                Kind::SLoad { field_lb: field_lb(operands[0])?, bounds }
            }
            "stencil.store" => {
                let bounds = store_bounds(op).cloned().ok_or_else(|| bad("missing store bounds"))?;
                Kind::SStore { field_lb: field_lb(operands[1])?, bounds }
            }
            "stencil.apply" => {
                let mut domain: Option<Bounds> = None;
                let mut elems = Vec::new();
                for r in &op.results {
                    let t = self.m.values.ty(*r).as_temp().ok_or_else(|| bad("apply results must be temps"))?;
                    let b = t.bounds.clone().ok_or_else(|| bad("temp bounds are unknown; run propagate-bounds first"))?;
                    domain = Some(match domain {
                        Some(d) => d.hull(&b),
                        None => b,
                    });
                    elems.push(Elem::of(&t.elem).ok_or_else(|| bad("unsupported element type"))?);
                }
                let mut ctx = ApplyCtx { args: op.regions[0].args.iter().map(|v| v.0).collect(), slots: 0 };
                regions.push(self.block(&op.regions[0], Some(&mut ctx))?);
                self.max_slots = self.max_slots.max(ctx.slots);
                Kind::Apply { domain: domain.ok_or_else(|| bad("apply without results"))?, elems }
            }
            "stencil.access" => {
                let ctx = apply.ok_or_else(|| bad("access outside of stencil.apply"))?;
                let arg = ctx
                    .args
                    .iter()
                    .position(|a| *a == operands[0])
                    .ok_or_else(|| bad("access must read a region argument of the enclosing apply"))?;
                let slot = ctx.slots;
                ctx.slots += 1;
                Kind::Access { arg, offset: access_offset(op).ok_or_else(|| bad("missing offset"))?, slot }
            }
            "stencil.return" => Kind::SReturn,
            "dmp.swap" => Kind::Swap {
                grid: swap_grid(op).cloned().ok_or_else(|| bad("missing grid"))?,
                exchanges: swap_exchanges(op).ok_or_else(|| bad("malformed swaps"))?,
            },
            n if n.starts_with("mpi.") => {
                let k = match n {
                    "mpi.init" => MpiOp::Init,
                    "mpi.finalize" => MpiOp::Finalize,
                    "mpi.comm_rank" => MpiOp::CommRank,
                    "mpi.comm_size" => MpiOp::CommSize,
                    "mpi.unwrap_memref" => MpiOp::Unwrap,
                    "mpi.send" => MpiOp::Send,
                    "mpi.recv" => MpiOp::Recv,
                    "mpi.isend" => MpiOp::Isend,
                    "mpi.irecv" => MpiOp::Irecv,
                    "mpi.wait" => MpiOp::Wait,
                    "mpi.test" => MpiOp::Test,
                    "mpi.waitall" => MpiOp::Waitall,
                    "mpi.reduce" => MpiOp::Reduce,
                    "mpi.allreduce" => MpiOp::Allreduce,
                    "mpi.bcast" => MpiOp::Bcast,
                    "mpi.gather" => MpiOp::Gather,
                    _ => return Err(bad("unknown mpi operation")),
                };
                Kind::Mpi(k, op.attr("op").and_then(|a| a.as_str()).map(str::to_string))
            }
            _ => Kind::Unsupported,
        };
        let stat_name = match &kind {
            Kind::Call(_, callee) => format!("func.call @{callee}"),
            _ => op.name.clone(),
        };
        Ok(Node { kind, operands, results, regions, stat: self.stat(stat_name), name: op.name.clone(), location: op.location })
    }
}

impl From<Scalar> for Kind {
    fn from(s: Scalar) -> Kind {
        Kind::Const(s)
    }
}

use std::collections::HashMap;

use crate::dialects::{ensure, OpDef};
use crate::ir::verify::{op_label, VerifyCtx};
use crate::ir::{Diagnostic, Module, Operation, Region, Type, ValueId};

pub(crate) const OPS: &[OpDef] = &[
    OpDef::unquoted("mpi.init", verify_nullary),
    OpDef::unquoted("mpi.finalize", verify_nullary),
    OpDef::unquoted("mpi.comm_rank", verify_comm_query),
    OpDef::unquoted("mpi.comm_size", verify_comm_query),
    OpDef::unquoted("mpi.unwrap_memref", verify_unwrap),
    OpDef::unquoted("mpi.send", verify_p2p),
    OpDef::unquoted("mpi.recv", verify_p2p),
    OpDef::unquoted("mpi.isend", verify_p2p),
    OpDef::unquoted("mpi.irecv", verify_p2p),
    OpDef::unquoted("mpi.wait", verify_wait),
    OpDef::unquoted("mpi.test", verify_wait),
    OpDef::unquoted("mpi.waitall", verify_waitall),
    OpDef::unquoted("mpi.reduce", verify_reduce),
    OpDef::unquoted("mpi.allreduce", verify_reduce),
    OpDef::unquoted("mpi.bcast", verify_bcast),
    OpDef::unquoted("mpi.gather", verify_gather),
];

/// Reduction kinds accepted by `mpi.reduce` / `mpi.allreduce` (`op` attribute).
pub const REDUCTION_KINDS: &[&str] = &["sum", "prod", "max", "min"];

/// Ops that consume a request.
pub const REQUEST_CONSUMERS: &[&str] = &["mpi.wait", "mpi.test", "mpi.waitall"];

fn signature(op: &Operation, ctx: &VerifyCtx<'_>, operands: &[Type], results: &[Type]) -> Result<(), String> {
    ensure!(op.regions.is_empty(), "expected no regions");
    ensure!(op.operands.len() == operands.len(), "expected {} operand(s), found {}", operands.len(), op.operands.len());
    ensure!(op.results.len() == results.len(), "expected {} result(s), found {}", results.len(), op.results.len());
    for (i, (v, t)) in op.operands.iter().zip(operands).enumerate() {
        let actual = ctx.ty(*v);
        ensure!(actual == t, "operand #{i} must have type {t}, found {actual}");
    }
    for (i, (v, t)) in op.results.iter().zip(results).enumerate() {
        let actual = ctx.ty(*v);
        ensure!(actual == t, "result #{i} must have type {t}, found {actual}");
    }
    Ok(())
}

fn verify_nullary(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    signature(op, ctx, &[], &[])
}

fn verify_comm_query(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    signature(op, ctx, &[], &[Type::I32])
}

fn verify_unwrap(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(op.operands.len() == 1, "expected 1 operand, found {}", op.operands.len());
    let ty = ctx.ty(op.operands[0]);
    let m = ty.as_memref().ok_or_else(|| format!("mpi.unwrap_memref needs a memref operand, found {ty}"))?;
    ensure!(datatype_name(&m.elem).is_some(), "element type {} has no MPI datatype", m.elem);
    signature(op, ctx, std::slice::from_ref(ty), &[Type::LlvmPtr, Type::I32, Type::MpiDatatype])
}

fn p2p_operands() -> [Type; 5] {
    [Type::LlvmPtr, Type::I32, Type::MpiDatatype, Type::I32, Type::I32]
}

fn verify_p2p(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    let results: &[Type] = if matches!(op.name.as_str(), "mpi.isend" | "mpi.irecv") { &[Type::MpiRequest] } else { &[] };
    signature(op, ctx, &p2p_operands(), results)
}

fn verify_wait(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    let results: &[Type] = if op.name == "mpi.test" { &[Type::I1] } else { &[] };
    signature(op, ctx, &[Type::MpiRequest], results)
}

fn verify_waitall(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    let operands = vec![Type::MpiRequest; op.operands.len()];
    signature(op, ctx, &operands, &[])
}

fn verify_reduce(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    let kind = op.attr("op").and_then(|a| a.as_str()).ok_or("missing string attribute 'op'")?;
    ensure!(REDUCTION_KINDS.contains(&kind), "unknown reduction kind '{kind}' (expected one of {REDUCTION_KINDS:?})");
    signature(op, ctx, &[Type::LlvmPtr, Type::LlvmPtr, Type::I32, Type::MpiDatatype], &[])
}

fn verify_bcast(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    signature(op, ctx, &[Type::LlvmPtr, Type::I32, Type::MpiDatatype], &[])
}

fn verify_gather(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    signature(op, ctx, &[Type::LlvmPtr, Type::LlvmPtr, Type::I32, Type::MpiDatatype], &[])
}

/// Symbolic MPI datatype of a scalar element type.
pub fn datatype_name(elem: &Type) -> Option<&'static str> {
    match elem {
        Type::F64 => Some("MPI_DOUBLE"),
        Type::F32 => Some("MPI_FLOAT"),
        Type::I32 => Some("MPI_INT"),
        Type::I64 | Type::Index => Some("MPI_LONG_LONG"),
        _ => None,
    }
}

/// Every request must be consumed by exactly one wait, test or waitall, and
/// must not flow anywhere else.
pub(crate) fn check_request_linearity(m: &Module) -> Vec<Diagnostic> {
    struct Def<'a> {
        op: &'a Operation,
        path: String,
        consumed: usize,
        escaped: Vec<String>,
    }
    fn visit<'a>(r: &'a Region, path: &str, m: &Module, defs: &mut HashMap<ValueId, Def<'a>>, order: &mut Vec<ValueId>) {
        for op in &r.ops {
            let here = if path.is_empty() { op_label(op) } else { format!("{path} > {}", op_label(op)) };
            for v in &op.operands {
                if let Some(d) = defs.get_mut(v) {
                    if REQUEST_CONSUMERS.contains(&op.name.as_str()) {
                        d.consumed += 1;
                    } else {
                        d.escaped.push(op.name.clone());
                    }
                }
            }
            for v in &op.results {
                if *m.value_type(*v) == Type::MpiRequest {
                    defs.insert(*v, Def { op, path: here.clone(), consumed: 0, escaped: Vec::new() });
                    order.push(*v);
                }
            }
            for sub in &op.regions {
                visit(sub, &here, m, defs, order);
            }
        }
    }
    let mut defs = HashMap::new();
    let mut order = Vec::new();
    visit(&m.body, "", m, &mut defs, &mut order);
    let mut out = Vec::new();
    for v in order {
        let d = &defs[&v];
        if !d.escaped.is_empty() {
            out.push(Diagnostic::new(
                d.op,
                d.path.clone(),
                format!("request produced by {} is used by {} (requests may only be consumed by wait/test/waitall)", d.op.name, d.escaped.join(", ")),
            ));
        } else if d.consumed != 1 {
            out.push(Diagnostic::new(
                d.op,
                d.path.clone(),
                format!("request produced by {} is consumed {} times; it must be consumed exactly once", d.op.name, d.consumed),
            ));
        }
    }
    out
}

//! mpi ops → calls of the C MPI interface.
//!
//! Handles, datatypes and other symbolic constants become the integers of
//! an [`AbiTable`]. Request values live in a per-function `memref<Nxi32>`
//! (one slot per request-producing op) whose element addresses are passed
//! to `MPI_Isend`/`MPI_Irecv`/`MPI_Wait*`. Pointers are produced the way
//! `mpi.unwrap_memref` is expanded: aligned pointer as index, cast to i64,
//! `llvm.inttoptr`.

use std::collections::HashMap;

use super::abi::{AbiTable, REDUCTION_OPS};
use super::ops::datatype_name;
use crate::ir::pass::PassError;
use crate::ir::{Attribute, FunctionType, MemRefType, Module, OpBuilder, Operation, Region, Type, ValueId, ValueTable};

/// Signature of every external function the lowering may call.
pub fn external_signature(name: &str) -> Option<FunctionType> {
    use Type::{LlvmPtr as P, I32 as I};
    let inputs = match name {
        "MPI_Init" => vec![P, P],
        "MPI_Finalize" => vec![],
        "MPI_Comm_rank" | "MPI_Comm_size" => vec![I, P],
        "MPI_Send" => vec![P, I, I, I, I, I],
        "MPI_Recv" => vec![P, I, I, I, I, I, P],
        "MPI_Isend" | "MPI_Irecv" => vec![P, I, I, I, I, I, P],
        "MPI_Wait" => vec![P, P],
        "MPI_Test" => vec![P, P, P],
        "MPI_Waitall" => vec![I, P, P],
        "MPI_Reduce" => vec![P, P, I, I, I, I, I],
        "MPI_Allreduce" => vec![P, P, I, I, I, I],
        "MPI_Bcast" => vec![P, I, I, I, I],
        "MPI_Gather" => vec![P, I, I, P, I, I, I, I],
        _ => return None,
    };
    Some(FunctionType { inputs, results: Vec::new() })
}

pub fn lower_mpi_to_func(m: &mut Module, abi: &AbiTable) -> Result<(), PassError> {
    let abi_err = |e: super::abi::AbiError| PassError::new(format!("lower-mpi-to-func: {e}"));
    let consts = Consts {
        comm: abi.get_i32("MPI_COMM_WORLD").map_err(abi_err)?,
        status_ignore: abi.get("MPI_STATUS_IGNORE").map_err(abi_err)?,
        statuses_ignore: abi.get("MPI_STATUSES_IGNORE").map_err(abi_err)?,
    };
    let mut used: Vec<&'static str> = Vec::new();
    let Module { values, body } = m;
    for func in body.ops.iter_mut() {
        if func.name != "func.func" || func.regions.is_empty() {
            continue;
        }
        let mut needs_scratch = false;
        let mut n_requests = 0i64;
        let mut has_mpi = false;
        func.regions[0].walk(&mut |op| match op.name.as_str() {
            "mpi.isend" | "mpi.irecv" => {
                n_requests += 1;
                has_mpi = true;
            }
            "mpi.comm_rank" | "mpi.comm_size" | "mpi.test" => {
                needs_scratch = true;
                has_mpi = true;
            }
            n if n.starts_with("mpi.") => has_mpi = true,
            _ => {}
        });
        if !has_mpi {
            continue;
        }
        let mut entry = OpBuilder::new(values);
        let requests = (n_requests > 0).then(|| {
            let buf = entry.create1("memref.alloc", vec![], Type::MemRef(MemRefType::new(vec![n_requests], Type::I32)));
            let base = entry.create1("memref.extract_aligned_pointer_as_index", vec![buf], Type::Index);
            (buf, base)
        });
        let scratch = needs_scratch.then(|| {
            let buf = entry.create1("memref.alloc", vec![], Type::MemRef(MemRefType::new(vec![1], Type::I32)));
            let p = pointer_to(&mut entry, buf, 0);
            (buf, p)
        });
        let entry_ops = entry.finish();
        let mut lw = Lowering { values, abi, consts: &consts, requests, scratch, slots: HashMap::new(), next_slot: 0, used: &mut used };
        let mut region = std::mem::take(&mut func.regions[0]);
        lw.region(&mut region)?;
        let mut ops = entry_ops;
        let allocs: Vec<ValueId> = requests.iter().chain(scratch.iter()).map(|(b, _)| *b).collect();
        for op in region.ops.drain(..) {
            if op.name == "func.return" {
                for a in &allocs {
                    ops.push(Operation::new("memref.dealloc").with_operands(vec![*a]));
                }
            }
            ops.push(op);
        }
        region.ops = ops;
        func.regions[0] = region;
    }
    for name in used {
        if m.function(name).is_some() {
            continue;
        }
        let ft = external_signature(name).expect("every emitted callee has a signature");
        m.body.ops.push(
            Operation::new("func.func")
                .with_attr("sym_name", Attribute::String(name.to_string()))
                .with_attr("function_type", Attribute::Type(Type::Function(ft))),
        );
    }
    Ok(())
}

struct Consts {
    comm: i64,
    status_ignore: i64,
    statuses_ignore: i64,
}

struct Lowering<'a, 'v> {
    values: &'v mut ValueTable,
    abi: &'a AbiTable,
    consts: &'a Consts,
    /// Request slot buffer and its base address as an index.
    requests: Option<(ValueId, ValueId)>,
    /// One-element i32 buffer for out-parameters, and a pointer to it.
    scratch: Option<(ValueId, ValueId)>,
    slots: HashMap<ValueId, i64>,
    next_slot: i64,
    used: &'a mut Vec<&'static str>,
}

/// Pointer to byte `offset` of buffer `buf`.
fn pointer_to(b: &mut OpBuilder<'_>, buf: ValueId, offset: i64) -> ValueId {
    let mut p = b.create1("memref.extract_aligned_pointer_as_index", vec![buf], Type::Index);
    if offset != 0 {
        let off = b.index(offset);
        p = b.binary("arith.addi", p, off);
    }
    address(b, p)
}

fn address(b: &mut OpBuilder<'_>, p: ValueId) -> ValueId {
    let i = b.index_cast(p, Type::I64);
    b.create1("llvm.inttoptr", vec![i], Type::LlvmPtr)
}

fn int_pointer(b: &mut OpBuilder<'_>, v: i64) -> ValueId {
    let i = b.i64(v);
    b.create1("llvm.inttoptr", vec![i], Type::LlvmPtr)
}

fn call(b: &mut OpBuilder<'_>, used: &mut Vec<&'static str>, callee: &'static str, args: Vec<ValueId>) {
    if !used.contains(&callee) {
        used.push(callee);
    }
    b.push(Operation::new("func.call").with_operands(args).with_attr("callee", Attribute::Symbol(callee.to_string())));
}

/// Address of request slot `slot`, given the slot buffer's base address.
fn slot_pointer(b: &mut OpBuilder<'_>, requests: Option<(ValueId, ValueId)>, slot: i64) -> ValueId {
    let (_, base) = requests.expect("request buffer allocated");
    let off = b.index(slot * 4);
    let p = b.binary("arith.addi", base, off);
    address(b, p)
}

impl Lowering<'_, '_> {
    fn region(&mut self, r: &mut Region) -> Result<(), PassError> {
        let ops = std::mem::take(&mut r.ops);
        for mut op in ops {
            for sub in op.regions.iter_mut() {
                self.region(sub)?;
            }
            if op.dialect() == "mpi" {
                let lowered = self.op(&op)?;
                r.ops.extend(lowered);
            } else {
                r.ops.push(op);
            }
        }
        Ok(())
    }

    fn op(&mut self, op: &Operation) -> Result<Vec<Operation>, PassError> {
        let err = |msg: String| PassError::new(format!("lower-mpi-to-func: {}: {msg}", op.describe()));
        let slots = &mut self.slots;
        let used = &mut *self.used;
        let requests = self.requests;
        let mut retype = None;
        let mut b = OpBuilder::new(self.values);
        let comm_value = self.consts.comm;
        let o = &op.operands;
        match op.name.as_str() {
            "mpi.init" => {
                let null = int_pointer(&mut b, 0);
                call(&mut b, used, "MPI_Init", vec![null, null]);
            }
            "mpi.finalize" => call(&mut b, used, "MPI_Finalize", vec![]),
            "mpi.comm_rank" | "mpi.comm_size" => {
                let (buf, p) = self.scratch.expect("scratch buffer allocated");
                let callee = if op.name == "mpi.comm_rank" { "MPI_Comm_rank" } else { "MPI_Comm_size" };
                let comm = b.i32(comm_value);
                call(&mut b, used, callee, vec![comm, p]);
                let zero = b.index(0);
                b.push(Operation::new("memref.load").with_operands(vec![buf, zero]).with_results(vec![op.results[0]]));
            }
            "mpi.unwrap_memref" => {
                let mt = b.value_type(o[0]).as_memref().cloned().ok_or_else(|| err("operand is not a memref".into()))?;
                let dt_name = datatype_name(&mt.elem).ok_or_else(|| err(format!("no MPI datatype for {}", mt.elem)))?;
                let dt = self.abi.get_i32(dt_name).map_err(|e| err(e.to_string()))?;
                let p = b.create1("memref.extract_aligned_pointer_as_index", vec![o[0]], Type::Index);
                let i = b.index_cast(p, Type::I64);
                b.push(Operation::new("llvm.inttoptr").with_operands(vec![i]).with_results(vec![op.results[0]]));
                b.push(
                    Operation::new("arith.constant")
                        .with_results(vec![op.results[1]])
                        .with_attr("value", Attribute::int(mt.num_elements(), Type::I32)),
                );
                b.push(Operation::new("arith.constant").with_results(vec![op.results[2]]).with_attr("value", Attribute::int(dt, Type::I32)));
                retype = Some(op.results[2]);
            }
            "mpi.send" => {
                let comm = b.i32(comm_value);
                call(&mut b, used, "MPI_Send", vec![o[0], o[1], o[2], o[3], o[4], comm]);
            }
            "mpi.recv" => {
                let st = int_pointer(&mut b, self.consts.status_ignore);
                let comm = b.i32(comm_value);
                call(&mut b, used, "MPI_Recv", vec![o[0], o[1], o[2], o[3], o[4], comm, st]);
            }
            "mpi.isend" | "mpi.irecv" => {
                let slot = self.next_slot;
                self.next_slot += 1;
                slots.insert(op.results[0], slot);
                let rp = slot_pointer(&mut b, requests, slot);
                let callee = if op.name == "mpi.isend" { "MPI_Isend" } else { "MPI_Irecv" };
                let comm = b.i32(comm_value);
                call(&mut b, used, callee, vec![o[0], o[1], o[2], o[3], o[4], comm, rp]);
            }
            "mpi.wait" => {
                let slot = slots.get(&o[0]).copied().ok_or_else(|| err("request has no slot".into()))?;
                let rp = slot_pointer(&mut b, requests, slot);
                let st = int_pointer(&mut b, self.consts.status_ignore);
                call(&mut b, used, "MPI_Wait", vec![rp, st]);
            }
            "mpi.test" => {
                let slot = slots.get(&o[0]).copied().ok_or_else(|| err("request has no slot".into()))?;
                let rp = slot_pointer(&mut b, requests, slot);
                let st = int_pointer(&mut b, self.consts.status_ignore);
                let (buf, p) = self.scratch.expect("scratch buffer allocated");
                call(&mut b, used, "MPI_Test", vec![rp, p, st]);
                let zero = b.index(0);
                let flag = b.create1("memref.load", vec![buf, zero], Type::I32);
                let zero32 = b.i32(0);
                b.push(
                    Operation::new("arith.cmpi")
                        .with_operands(vec![flag, zero32])
                        .with_results(vec![op.results[0]])
                        .with_attr("predicate", Attribute::string("ne")),
                );
            }
            "mpi.waitall" => {
                let slots: Option<Vec<i64>> = o.iter().map(|r| slots.get(r).copied()).collect();
                let slots = slots.ok_or_else(|| err("request has no slot".into()))?;
                let contiguous = slots.windows(2).all(|w| w[1] == w[0] + 1);
                if contiguous {
                    let n = b.i32(slots.len() as i64);
                    let rp = match slots.first() {
                        Some(&s) => slot_pointer(&mut b, requests, s),
                        None => int_pointer(&mut b, 0),
                    };
                    let st = int_pointer(&mut b, self.consts.statuses_ignore);
                    call(&mut b, used, "MPI_Waitall", vec![n, rp, st]);
                } else {
                    for s in slots {
                        let rp = slot_pointer(&mut b, requests, s);
                        let st = int_pointer(&mut b, self.consts.status_ignore);
                        call(&mut b, used, "MPI_Wait", vec![rp, st]);
                    }
                }
            }
            "mpi.reduce" | "mpi.allreduce" => {
                let kind = op.attr("op").and_then(|a| a.as_str()).unwrap_or("");
                let sym = REDUCTION_OPS.iter().find(|(k, _)| *k == kind).map(|(_, s)| *s).ok_or_else(|| err(format!("unknown reduction kind '{kind}'")))?;
                let red = self.abi.get_i32(sym).map_err(|e| err(e.to_string()))?;
                let red = b.i32(red);
                if op.name == "mpi.reduce" {
                    let root = b.i32(0);
                    let comm = b.i32(comm_value);
                    call(&mut b, used, "MPI_Reduce", vec![o[0], o[1], o[2], o[3], red, root, comm]);
                } else {
                    let comm = b.i32(comm_value);
                    call(&mut b, used, "MPI_Allreduce", vec![o[0], o[1], o[2], o[3], red, comm]);
                }
            }
            "mpi.bcast" => {
                let root = b.i32(0);
                let comm = b.i32(comm_value);
                call(&mut b, used, "MPI_Bcast", vec![o[0], o[1], o[2], root, comm]);
            }
            "mpi.gather" => {
                let root = b.i32(0);
                let comm = b.i32(comm_value);
                call(&mut b, used, "MPI_Gather", vec![o[0], o[2], o[3], o[1], o[2], o[3], root, comm]);
            }
            other => return Err(err(format!("no lowering for {other}"))),
        }
        let ops = b.finish();
        if let Some(v) = retype {
            self.values.set_type(v, Type::I32);
        }
        Ok(ops)
    }
}

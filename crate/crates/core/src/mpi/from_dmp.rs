//! `dmp.swap` → point-to-point messages.
//!
//! Every swap becomes, per exchange: a guarded pack loop copying the send
//! region into a contiguous buffer, an `mpi.irecv` and an `mpi.isend`; then
//! one `mpi.waitall` over all requests of the swap and guarded unpack loops
//! writing the halo. Ranks without a neighbor in some direction talk to
//! the null process (peer -1), whose requests complete immediately.
//!
//! With hoisting (the default) the rank query, coordinate and neighbor
//! arithmetic, tag constants and buffer allocations happen once at function
//! entry, so they stay outside any time loop.

use std::collections::{BTreeMap, HashMap};

use crate::dmp::ops::{swap_exchanges, swap_grid};
use crate::dmp::{ExchangeDecl, GridTopology};
use crate::ir::pass::PassError;
use crate::ir::{MemRefType, Module, OpBuilder, Operation, Region, Type, ValueId, ValueTable};

pub fn lower_dmp_to_mpi(m: &mut Module, hoist: bool) -> Result<(), PassError> {
    let Module { values, body } = m;
    for func in body.ops.iter_mut() {
        if func.name != "func.func" || func.regions.is_empty() {
            continue;
        }
        let mut swaps = Vec::new();
        func.regions[0].walk(&mut |op| {
            if op.name == "dmp.swap" {
                swaps.push(op.clone());
            }
        });
        if swaps.is_empty() {
            continue;
        }
        let fname = func.symbol_name().unwrap_or("?").to_string();
        let err = |msg: String| PassError::new(format!("lower-dmp-to-mpi @{fname}: {msg}"));
        let grid = swap_grid(&swaps[0]).cloned().ok_or_else(|| err("swap without a grid".into()))?;
        let mut directions: Vec<Vec<i64>> = Vec::new();
        for s in &swaps {
            if swap_grid(s) != Some(&grid) {
                return Err(err("swaps in one function must share the same grid".into()));
            }
            let ex = swap_exchanges(s).ok_or_else(|| err("malformed 'swaps' attribute".into()))?;
            for e in ex {
                if !directions.contains(&e.to) {
                    directions.push(e.to);
                }
            }
        }

        let mut lw = Lowering { values, grid, hoist, ordinal: 0, setup: None, entry: Vec::new(), hoisted_allocs: Vec::new() };
        if hoist && !directions.is_empty() {
            let mut b = OpBuilder::new(lw.values);
            let setup = emit_setup(&mut b, &lw.grid, &directions);
            lw.entry = b.finish();
            lw.setup = Some(setup);
        }
        let mut region = std::mem::take(&mut func.regions[0]);
        lw.region(&mut region)?;
        let mut ops = std::mem::take(&mut lw.entry);
        for op in region.ops.drain(..) {
            if op.name == "func.return" {
                for a in &lw.hoisted_allocs {
                    ops.push(Operation::new("memref.dealloc").with_operands(vec![*a]));
                }
            }
            ops.push(op);
        }
        region.ops = ops;
        func.regions[0] = region;
    }
    Ok(())
}

/// Rank and neighbor information shared by all swaps of a function.
struct Setup {
    /// Per neighbor offset: (neighbor exists, peer rank or -1).
    neighbors: HashMap<Vec<i64>, (ValueId, ValueId)>,
}

fn emit_setup(b: &mut OpBuilder<'_>, grid: &GridTopology, directions: &[Vec<i64>]) -> Setup {
    let rank = b.create1("mpi.comm_rank", vec![], Type::I32);
    let size = b.create1("mpi.comm_size", vec![], Type::I32);
    let rank_idx = b.index_cast(rank, Type::Index);
    let mut coord = Vec::with_capacity(grid.rank());
    for d in 0..grid.rank() {
        let stride = b.index(grid.stride(d) as i64);
        let dim = b.index(grid.dims[d] as i64);
        let q = b.binary("arith.divsi", rank_idx, stride);
        coord.push(b.binary("arith.remsi", q, dim));
    }
    let zero = b.index(0);
    let null = b.i32(-1);
    let mut neighbors = HashMap::new();
    for to in directions {
        let mut has: Option<ValueId> = None;
        let mut delta = 0i64;
        for (d, &o) in to.iter().enumerate() {
            if o == 0 {
                continue;
            }
            delta += o * grid.stride(d) as i64;
            let off = b.index(o);
            let dim = b.index(grid.dims[d] as i64);
            let c = b.binary("arith.addi", coord[d], off);
            let ge = b.cmpi("sge", c, zero);
            let lt = b.cmpi("slt", c, dim);
            let ok = b.binary("arith.andi", ge, lt);
            has = Some(match has {
                Some(h) => b.binary("arith.andi", h, ok),
                None => ok,
            });
        }
        let delta_c = b.index(delta);
        let peer_idx = b.binary("arith.addi", rank_idx, delta_c);
        let peer = b.index_cast(peer_idx, Type::I32);
        let in_comm = b.cmpi("slt", peer, size);
        let has = match has {
            Some(h) => b.binary("arith.andi", h, in_comm),
            None => in_comm,
        };
        let nbr = b.select(has, peer, null);
        neighbors.insert(to.clone(), (has, nbr));
    }
    Setup { neighbors }
}

/// Message tag of data travelling towards neighbor offset `to` in the swap
/// with the given ordinal: the offset is encoded base 3.
pub fn exchange_tag(ordinal: usize, to: &[i64]) -> i64 {
    let mut code = 0i64;
    for (d, &o) in to.iter().enumerate() {
        code += (o + 1) * 3i64.pow(d as u32);
    }
    ordinal as i64 * 3i64.pow(to.len() as u32) + code
}

struct Lowering<'v> {
    values: &'v mut ValueTable,
    grid: GridTopology,
    hoist: bool,
    ordinal: usize,
    setup: Option<Setup>,
    entry: Vec<Operation>,
    hoisted_allocs: Vec<ValueId>,
}

impl Lowering<'_> {
    fn region(&mut self, r: &mut Region) -> Result<(), PassError> {
        let ops = std::mem::take(&mut r.ops);
        for mut op in ops {
            for sub in op.regions.iter_mut() {
                self.region(sub)?;
            }
            if op.name == "dmp.swap" {
                let lowered = self.swap(&op)?;
                r.ops.extend(lowered);
            } else {
                r.ops.push(op);
            }
        }
        Ok(())
    }

    fn swap(&mut self, op: &Operation) -> Result<Vec<Operation>, PassError> {
        let ordinal = self.ordinal;
        self.ordinal += 1;
        let exchanges = swap_exchanges(op).ok_or_else(|| PassError::new(format!("{}: malformed 'swaps' attribute", op.describe())))?;
        if exchanges.is_empty() {
            return Ok(Vec::new());
        }
        let target = op.operands[0];
        let ty = self.values.ty(target).clone();
        let (view_ty, elem) = match &ty {
            Type::Field(f) => (Some(f.buffer_type()), (*f.elem).clone()),
            Type::MemRef(m) => (None, (*m.elem).clone()),
            t => return Err(PassError::new(format!("{}: swap operand must be a buffer, found {t}", op.describe()))),
        };

        // Buffers, either hoisted to function entry or local to this swap.
        let mut buffers = Vec::new();
        let mut b = OpBuilder::new(self.values);
        for e in &exchanges {
            let t = Type::MemRef(MemRefType::new(e.size.clone(), elem.clone()));
            let send = b.create1("memref.alloc", vec![], t.clone());
            let recv = b.create1("memref.alloc", vec![], t);
            buffers.push((send, recv));
        }
        let mut allocs = b.finish();
        if self.hoist {
            self.entry.append(&mut allocs);
            self.hoisted_allocs.extend(buffers.iter().flat_map(|(s, r)| [*s, *r]));
        }
        self.swap_body(target, view_ty, &exchanges, &buffers, ordinal, allocs)
    }

    fn swap_body(
        &mut self,
        target: ValueId,
        view_ty: Option<MemRefType>,
        exchanges: &[ExchangeDecl],
        buffers: &[(ValueId, ValueId)],
        ordinal: usize,
        prefix: Vec<Operation>,
    ) -> Result<Vec<Operation>, PassError> {
        let mut b = OpBuilder::new(self.values);
        for op in prefix {
            b.push(op);
        }
        let local_setup;
        let setup = match &self.setup {
            Some(s) => s,
            None => {
                let dirs: Vec<Vec<i64>> = exchanges.iter().map(|e| e.to.clone()).collect();
                local_setup = emit_setup(&mut b, &self.grid, &dirs);
                &local_setup
            }
        };
        let view = match view_ty {
            Some(t) => b.create1("builtin.unrealized_conversion_cast", vec![target], Type::MemRef(t)),
            None => target,
        };
        let mut requests = Vec::new();
        for (e, &(send, recv)) in exchanges.iter().zip(buffers) {
            let (has, peer) = setup.neighbors[&e.to];
            let src = e.send_at();
            b.if_then(has, |b| copy_box(b, &e.size, view, &src, send, &vec![0; src.len()]));
            let back: Vec<i64> = e.to.iter().map(|o| -o).collect();
            let recv_tag = b.i32(exchange_tag(ordinal, &back));
            let send_tag = b.i32(exchange_tag(ordinal, &e.to));
            let rp = b.create("mpi.unwrap_memref", vec![recv], vec![Type::LlvmPtr, Type::I32, Type::MpiDatatype], BTreeMap::new());
            requests.push(b.create1("mpi.irecv", vec![rp[0], rp[1], rp[2], peer, recv_tag], Type::MpiRequest));
            let sp = b.create("mpi.unwrap_memref", vec![send], vec![Type::LlvmPtr, Type::I32, Type::MpiDatatype], BTreeMap::new());
            requests.push(b.create1("mpi.isend", vec![sp[0], sp[1], sp[2], peer, send_tag], Type::MpiRequest));
        }
        b.create0("mpi.waitall", requests);
        for (e, &(_, recv)) in exchanges.iter().zip(buffers) {
            let (has, _) = setup.neighbors[&e.to];
            b.if_then(has, |b| copy_box(b, &e.size, recv, &vec![0; e.at.len()], view, &e.at));
        }
        if !self.hoist {
            for &(s, r) in buffers {
                b.create0("memref.dealloc", vec![s]);
                b.create0("memref.dealloc", vec![r]);
            }
        }
        Ok(b.finish())
    }
}

/// `dst[dst_at + i] = src[src_at + i]` for every `i` in the box `[0, size)`.
fn copy_box(b: &mut OpBuilder<'_>, size: &[i64], src: ValueId, src_at: &[i64], dst: ValueId, dst_at: &[i64]) {
    let lo = vec![0; size.len()];
    let elem = b.value_type(src).element_type().cloned().unwrap();
    b.loop_nest(&lo, size, &mut |b, ivs| {
        let s = shifted(b, ivs, src_at);
        let d = shifted(b, ivs, dst_at);
        let mut load_ops = vec![src];
        load_ops.extend(s);
        let x = b.create1("memref.load", load_ops, elem.clone());
        let mut store_ops = vec![x, dst];
        store_ops.extend(d);
        b.create0("memref.store", store_ops);
    });
}

fn shifted(b: &mut OpBuilder<'_>, ivs: &[ValueId], at: &[i64]) -> Vec<ValueId> {
    ivs.iter()
        .zip(at)
        .map(|(&iv, &a)| {
            if a == 0 {
                iv
            } else {
                let c = b.index(a);
                b.binary("arith.addi", iv, c)
            }
        })
        .collect()
}

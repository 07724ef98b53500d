//! Lowering of stencil ops to `scf.for` loop nests over plain buffers.
//!
//! Fields become memrefs of their allocation shape; a logical coordinate `p`
//! of a field with lower bound `lb` lives at buffer index `p - lb`. Applies
//! iterate their domain row-major and evaluate the body ops in order, so
//! the arithmetic is exactly that of the stencil-level interpreter.

use std::collections::{BTreeMap, HashMap};

use super::ops::{access_offset, store_bounds};
use super::{Bounds, ARG_BOUNDS_ATTR, SERIAL_REFERENCE_ATTR};
use crate::dialects::func::function_type;
use crate::ir::pass::PassError;
use crate::ir::{Attribute, FunctionType, Module, OpBuilder, Operation, Region, Type, ValueId, ValueTable};

/// Rewrites every stencil-level function (embedded serial references are
/// left alone) into loops over memrefs.
pub fn lower_stencil_to_loops(m: &mut Module) -> Result<(), PassError> {
    let Module { values, body } = m;
    for func in body.ops.iter_mut() {
        if func.name != "func.func" || func.regions.is_empty() || func.attr(SERIAL_REFERENCE_ATTR).is_some() {
            continue;
        }
        lower_function(values, func)?;
    }
    Ok(())
}

/// Where the values of a temp live once lowered: a buffer and the logical
/// coordinate of its first element.
#[derive(Clone)]
struct Source {
    buf: ValueId,
    lb: Vec<i64>,
}

struct Lowering<'v> {
    values: &'v mut ValueTable,
    /// Field values and their logical bounds, before retyping.
    fields: HashMap<ValueId, Bounds>,
    entry: Vec<Operation>,
    allocs: Vec<ValueId>,
    consts: HashMap<i64, ValueId>,
}

fn temp_bounds(values: &ValueTable, v: ValueId) -> Result<Bounds, PassError> {
    values
        .ty(v)
        .as_temp()
        .and_then(|t| t.bounds.clone())
        .ok_or_else(|| PassError::new("unresolved temp bounds; run propagate-bounds first"))
}

fn lower_function(values: &mut ValueTable, func: &mut Operation) -> Result<(), PassError> {
    let mut fields = HashMap::new();
    let body = &func.regions[0];
    let mut all_values: Vec<ValueId> = body.args.clone();
    body.walk(&mut |op| {
        all_values.extend(&op.results);
        for r in &op.regions {
            all_values.extend(&r.args);
        }
    });
    for v in &all_values {
        if let Type::Field(f) = values.ty(*v) {
            fields.insert(*v, f.bounds.clone());
        }
    }

    let mut lw = Lowering { values, fields, entry: Vec::new(), allocs: Vec::new(), consts: HashMap::new() };
    let mut region = std::mem::take(&mut func.regions[0]);
    let ops = std::mem::take(&mut region.ops);
    let mut new_ops = lw.block(ops)?;

    // Deallocate scratch buffers on the way out.
    let mut with_deallocs = Vec::with_capacity(new_ops.len());
    for op in new_ops.drain(..) {
        if op.name == "func.return" {
            for a in &lw.allocs {
                with_deallocs.push(Operation::new("memref.dealloc").with_operands(vec![*a]));
            }
        }
        with_deallocs.push(op);
    }
    let mut ops = std::mem::take(&mut lw.entry);
    ops.extend(with_deallocs);
    region.ops = ops;

    // Fields become plain buffers; casts between the two views vanish.
    for (v, b) in &lw.fields {
        let elem = lw.values.ty(*v).element_type().cloned().unwrap();
        lw.values.set_type(*v, Type::MemRef(crate::ir::MemRefType::new(b.shape(), elem)));
    }
    let mut replace = HashMap::new();
    erase_identity_casts(lw.values, &mut region, &mut replace);
    replace_uses(&mut region, &replace);
    func.regions[0] = region;

    if let Some(ft) = function_type(func).cloned() {
        let arg_bounds: Vec<Attribute> = func.regions[0]
            .args
            .iter()
            .map(|a| lw.fields.get(a).map_or(Attribute::Unit, |b| Attribute::Bounds(b.clone())))
            .collect();
        let lower = |t: &Type| match t {
            Type::Field(f) => Type::MemRef(f.buffer_type()),
            t => t.clone(),
        };
        let new_ft = FunctionType { inputs: ft.inputs.iter().map(lower).collect(), results: ft.results.iter().map(lower).collect() };
        func.attributes.insert("function_type".into(), Attribute::Type(Type::Function(new_ft)));
        if lw.fields.keys().any(|v| func.regions[0].args.contains(v)) {
            func.attributes.insert(ARG_BOUNDS_ATTR.into(), Attribute::Array(arg_bounds));
        }
    }
    Ok(())
}

fn erase_identity_casts(values: &ValueTable, r: &mut Region, replace: &mut HashMap<ValueId, ValueId>) {
    r.ops.retain(|op| {
        if op.name == "builtin.unrealized_conversion_cast" && values.ty(op.operands[0]) == values.ty(op.results[0]) {
            replace.insert(op.results[0], op.operands[0]);
            false
        } else {
            true
        }
    });
    for op in r.ops.iter_mut() {
        for sub in op.regions.iter_mut() {
            erase_identity_casts(values, sub, replace);
        }
    }
}

pub(crate) fn replace_uses(r: &mut Region, map: &HashMap<ValueId, ValueId>) {
    if map.is_empty() {
        return;
    }
    r.walk_mut(&mut |op| {
        for v in op.operands.iter_mut() {
            let mut cur = *v;
            while let Some(n) = map.get(&cur) {
                cur = *n;
            }
            *v = cur;
        }
    });
}

impl Lowering<'_> {
    fn cst(&mut self, v: i64) -> ValueId {
        if let Some(c) = self.consts.get(&v) {
            return *c;
        }
        let mut b = OpBuilder::new(self.values);
        let c = b.index(v);
        self.entry.extend(b.finish());
        self.consts.insert(v, c);
        c
    }

    fn alloc(&mut self, shape: Vec<i64>, elem: Type) -> ValueId {
        let mut b = OpBuilder::new(self.values);
        let ty = Type::MemRef(crate::ir::MemRefType::new(shape, elem));
        let r = b.create("memref.alloc", Vec::new(), vec![ty], BTreeMap::new())[0];
        self.entry.extend(b.finish());
        self.allocs.push(r);
        r
    }

    fn field_of(&self, v: ValueId) -> Result<Source, PassError> {
        self.fields
            .get(&v)
            .map(|b| Source { buf: v, lb: b.lb.clone() })
            .ok_or_else(|| PassError::new("stencil op on a value that is not a field"))
    }

    /// Emits `dst[p - dst.lb] = src[p - src.lb]` for all `p` in `range`.
    fn copy_loop(&mut self, out: &mut Vec<Operation>, src: &Source, dst: &Source, range: &Bounds) {
        let elem = self.values.ty(src.buf).element_type().cloned().unwrap();
        let lo: Vec<ValueId> = range.lb.iter().map(|v| self.cst(*v)).collect();
        let hi: Vec<ValueId> = range.ub.iter().map(|v| self.cst(*v)).collect();
        let one = self.cst(1);
        let src_shift: Vec<i64> = src.lb.iter().map(|l| -l).collect();
        let dst_shift: Vec<i64> = dst.lb.iter().map(|l| -l).collect();
        let shift_consts: Vec<i64> = src_shift.iter().chain(&dst_shift).copied().collect();
        for s in shift_consts {
            if s != 0 {
                self.cst(s);
            }
        }
        let consts = self.consts.clone();
        let values = &mut *self.values;
        let mut b = OpBuilder::new(values);
        nest(&mut b, &lo, &hi, one, &mut |b, ivs| {
            let si = shift_with(b, ivs, &src_shift, &consts);
            let mut operands = vec![src.buf];
            operands.extend(si);
            let v = b.create1("memref.load", operands, elem.clone());
            let di = shift_with(b, ivs, &dst_shift, &consts);
            let mut operands = vec![v, dst.buf];
            operands.extend(di);
            b.create0("memref.store", operands);
        });
        out.extend(b.finish());
    }

    fn block(&mut self, ops: Vec<Operation>) -> Result<Vec<Operation>, PassError> {
        // Loads whose field is stored to later in the block are snapshotted.
        let mut materialize = vec![false; ops.len()];
        for (i, op) in ops.iter().enumerate() {
            if op.name == "stencil.load" {
                let f = op.operands[0];
                materialize[i] = ops[i + 1..].iter().any(|o| o.name == "stencil.store" && o.operands[1] == f);
            }
        }
        // Apply results used only by one store of exactly their domain are
        // written straight into the stored field, provided nothing loads that
        // field in between.
        let mut direct: HashMap<ValueId, usize> = HashMap::new();
        for (i, op) in ops.iter().enumerate() {
            if op.name != "stencil.apply" {
                continue;
            }
            for r in &op.results {
                let uses: Vec<usize> = (i + 1..ops.len()).filter(|&j| uses_value(&ops[j], *r)).collect();
                let [j] = uses[..] else { continue };
                let s = &ops[j];
                if s.name != "stencil.store" || s.operands[0] != *r {
                    continue;
                }
                let f = s.operands[1];
                let same_range = store_bounds(s) == temp_bounds(self.values, *r).ok().as_ref();
                let reads_between = ops[i + 1..j].iter().any(|o| o.name == "stencil.load" && o.operands[0] == f);
                if same_range && !reads_between {
                    direct.insert(*r, j);
                }
            }
        }
        let skipped_stores: Vec<usize> = direct.values().copied().collect();
        let direct_targets: HashMap<ValueId, ValueId> = direct.iter().map(|(r, j)| (*r, ops[*j].operands[1])).collect();

        let mut sources: HashMap<ValueId, Source> = HashMap::new();
        let mut out = Vec::with_capacity(ops.len());
        for (i, mut op) in ops.into_iter().enumerate() {
            match op.name.as_str() {
                "stencil.load" => {
                    let field = self.field_of(op.operands[0])?;
                    if materialize[i] {
                        let b = temp_bounds(self.values, op.results[0])?;
                        let elem = self.values.ty(op.results[0]).element_type().cloned().unwrap();
                        let buf = self.alloc(b.shape(), elem);
                        let dst = Source { buf, lb: b.lb.clone() };
                        self.copy_loop(&mut out, &field, &dst, &b);
                        sources.insert(op.results[0], dst);
                    } else {
                        sources.insert(op.results[0], field);
                    }
                }
                "stencil.apply" => {
                    let domain = temp_bounds(self.values, op.results[0])?;
                    let mut targets = Vec::new();
                    for r in op.results.clone() {
                        let t = match direct_targets.get(&r) {
                            Some(f) => self.field_of(*f)?,
                            None => {
                                let elem = self.values.ty(r).element_type().cloned().unwrap();
                                let buf = self.alloc(domain.shape(), elem);
                                let src = Source { buf, lb: domain.lb.clone() };
                                sources.insert(r, src.clone());
                                src
                            }
                        };
                        targets.push(t);
                    }
                    self.apply(&mut out, op, &sources, &targets, &domain)?;
                }
                "stencil.store" => {
                    if skipped_stores.contains(&i) {
                        continue;
                    }
                    let src = sources
                        .get(&op.operands[0])
                        .cloned()
                        .ok_or_else(|| PassError::new("stencil.store of a temp defined outside its block"))?;
                    let dst = self.field_of(op.operands[1])?;
                    let range = store_bounds(&op).cloned().unwrap();
                    self.copy_loop(&mut out, &src, &dst, &range);
                }
                "stencil.access" | "stencil.return" => {
                    return Err(PassError::new(format!("{} outside of a stencil.apply", op.describe())));
                }
                _ => {
                    for r in op.regions.iter_mut() {
                        let inner = std::mem::take(&mut r.ops);
                        r.ops = self.block(inner)?;
                    }
                    out.push(op);
                }
            }
        }
        Ok(out)
    }

    /// One loop nest over `domain` evaluating the apply body per point.
    fn apply(
        &mut self,
        out: &mut Vec<Operation>,
        mut op: Operation,
        sources: &HashMap<ValueId, Source>,
        targets: &[Source],
        domain: &Bounds,
    ) -> Result<(), PassError> {
        let mut region = std::mem::take(&mut op.regions[0]);
        let mut scalar_args = HashMap::new();
        let mut arg_sources: HashMap<ValueId, Source> = HashMap::new();
        for (a, v) in region.args.iter().zip(&op.operands) {
            if self.values.ty(*v).as_temp().is_some() {
                let s = sources
                    .get(v)
                    .cloned()
                    .ok_or_else(|| PassError::new(format!("{}: operand temp is not defined in the same block", op.describe())))?;
                arg_sources.insert(*a, s);
            } else {
                scalar_args.insert(*a, *v);
            }
        }
        replace_uses(&mut region, &scalar_args);

        // Constants the loop body needs, created up front at function entry.
        let lo: Vec<ValueId> = domain.lb.iter().map(|v| self.cst(*v)).collect();
        let hi: Vec<ValueId> = domain.ub.iter().map(|v| self.cst(*v)).collect();
        let one = self.cst(1);
        let mut needed = Vec::new();
        for o in &region.ops {
            match o.name.as_str() {
                "stencil.access" => {
                    let src = &arg_sources[&o.operands[0]];
                    let off = access_offset(o).unwrap();
                    needed.extend(off.iter().zip(&src.lb).map(|(a, l)| a - l));
                }
                "stencil.return" => {}
                _ => {
                    let mut nested_access = false;
                    for r in &o.regions {
                        r.walk(&mut |x| nested_access |= x.name.starts_with("stencil."));
                    }
                    if nested_access {
                        return Err(PassError::new("stencil ops nested inside control flow of an apply body are not supported"));
                    }
                }
            }
        }
        for t in targets {
            needed.extend(t.lb.iter().map(|l| -l));
        }
        for s in needed {
            if s != 0 {
                self.cst(s);
            }
        }
        let consts = self.consts.clone();
        let mut body_ops = Some(region.ops);
        let mut b = OpBuilder::new(self.values);
        nest(&mut b, &lo, &hi, one, &mut |b, ivs| {
            for o in body_ops.take().unwrap() {
                match o.name.as_str() {
                    "stencil.access" => {
                        let src = &arg_sources[&o.operands[0]];
                        let off = access_offset(&o).unwrap();
                        let shift: Vec<i64> = off.iter().zip(&src.lb).map(|(a, l)| a - l).collect();
                        let mut operands = vec![src.buf];
                        operands.extend(shift_with(b, ivs, &shift, &consts));
                        b.push(Operation::new("memref.load").with_operands(operands).with_results(o.results.clone()));
                    }
                    "stencil.return" => {
                        for (v, t) in o.operands.iter().zip(targets) {
                            let shift: Vec<i64> = t.lb.iter().map(|l| -l).collect();
                            let mut operands = vec![*v, t.buf];
                            operands.extend(shift_with(b, ivs, &shift, &consts));
                            b.create0("memref.store", operands);
                        }
                    }
                    _ => b.push(o),
                }
            }
        });
        out.extend(b.finish());
        Ok(())
    }
}

fn uses_value(op: &Operation, v: ValueId) -> bool {
    let mut found = false;
    op.walk(&mut |o| found |= o.operands.contains(&v));
    found
}

fn shift_with(b: &mut OpBuilder<'_>, ivs: &[ValueId], shift: &[i64], consts: &HashMap<i64, ValueId>) -> Vec<ValueId> {
    ivs.iter().zip(shift).map(|(iv, s)| if *s == 0 { *iv } else { b.binary("arith.addi", *iv, consts[s]) }).collect()
}

/// Loop nest with bounds given as existing index values.
fn nest(b: &mut OpBuilder<'_>, lo: &[ValueId], hi: &[ValueId], step: ValueId, body: &mut dyn FnMut(&mut OpBuilder<'_>, &[ValueId])) {
    fn rec(
        b: &mut OpBuilder<'_>,
        lo: &[ValueId],
        hi: &[ValueId],
        step: ValueId,
        ivs: &mut Vec<ValueId>,
        body: &mut dyn FnMut(&mut OpBuilder<'_>, &[ValueId]),
    ) {
        let d = ivs.len();
        if d == lo.len() {
            body(b, ivs);
            return;
        }
        b.for_loop(lo[d], hi[d], step, Vec::new(), |b, iv, _| {
            ivs.push(iv);
            rec(b, lo, hi, step, ivs, body);
            ivs.pop();
            Vec::new()
        });
    }
    let mut ivs = Vec::new();
    rec(b, lo, hi, step, &mut ivs, body);
}

//! Access-extent inference and bounds propagation.

use std::collections::HashMap;

use super::ops::{access_offset, store_bounds};
use super::{AccessExtent, Bounds};
use crate::ir::pass::PassError;
use crate::ir::{Module, Operation, Region, TempType, Type, ValueId, ValueTable};

/// Exact per-operand access extents of a `stencil.apply`. Scalar operands
/// get a rank-0 extent; temps that are never accessed get all zeros.
pub fn infer_access_extent(m: &Module, apply: &Operation) -> Vec<AccessExtent> {
    infer_with_table(&m.values, apply)
}

pub(crate) fn infer_with_table(values: &ValueTable, apply: &Operation) -> Vec<AccessExtent> {
    let body = &apply.regions[0];
    let mut found: Vec<Option<AccessExtent>> = vec![None; body.args.len()];
    let index_of: HashMap<ValueId, usize> = body.args.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    body.walk(&mut |op| {
        if op.name != "stencil.access" {
            return;
        }
        let (Some(&i), Some(off)) = (index_of.get(&op.operands[0]), access_offset(op)) else { return };
        match &mut found[i] {
            Some(e) => e.include(&off),
            slot @ None => *slot = Some(AccessExtent { min: off.clone(), max: off }),
        }
    });
    found
        .into_iter()
        .zip(&body.args)
        .map(|(e, a)| {
            let rank = values.ty(*a).as_temp().map_or(0, |t| t.rank);
            e.unwrap_or_else(|| AccessExtent::zero(rank))
        })
        .collect()
}

/// Every offset read by an apply, per operand.
pub fn access_offsets(apply: &Operation) -> Vec<Vec<Vec<i64>>> {
    let body = &apply.regions[0];
    let mut out = vec![Vec::new(); body.args.len()];
    body.walk(&mut |op| {
        if op.name == "stencil.access" {
            if let (Some(i), Some(off)) = (body.args.iter().position(|a| *a == op.operands[0]), access_offset(op)) {
                out[i].push(off);
            }
        }
    });
    out
}

/// Resolves every `!temp<?...>` bound from the store ranges backwards:
/// apply results cover the union of what their consumers need, apply
/// operands need the result bounds widened by their access extent, and
/// loads must fit inside the loaded field.
pub fn propagate_bounds(m: &mut Module) -> Result<(), PassError> {
    let Module { values, body } = m;
    let mut errors = Vec::new();
    propagate_region(values, body, &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(PassError::new(errors.join("\n")))
    }
}

fn propagate_region(values: &mut ValueTable, r: &mut Region, errors: &mut Vec<String>) {
    let mut demand: HashMap<ValueId, Bounds> = HashMap::new();
    let add = |demand: &mut HashMap<ValueId, Bounds>, v: ValueId, b: Bounds| {
        demand.entry(v).and_modify(|d| *d = d.hull(&b)).or_insert(b);
    };
    for op in r.ops.iter().rev() {
        match op.name.as_str() {
            "stencil.store" => {
                if let Some(b) = store_bounds(op) {
                    add(&mut demand, op.operands[0], b.clone());
                }
            }
            "stencil.apply" => {
                let mut domain: Option<Bounds> = None;
                for res in &op.results {
                    if let Some(d) = demand.get(res) {
                        domain = Some(match domain {
                            Some(x) => x.hull(d),
                            None => d.clone(),
                        });
                    }
                }
                let Some(domain) = domain else {
                    errors.push(format!("{}: result bounds cannot be inferred because no result is stored or used", op.describe()));
                    continue;
                };
                for res in &op.results {
                    let elem = values.ty(*res).element_type().cloned().unwrap_or(Type::F64);
                    values.set_type(*res, Type::Temp(TempType::with_bounds(domain.clone(), elem)));
                }
                for (i, ext) in infer_with_table(values, op).into_iter().enumerate() {
                    let v = op.operands[i];
                    if values.ty(v).as_temp().is_some() {
                        add(&mut demand, v, domain.widen(&ext));
                    }
                }
            }
            "stencil.load" => {
                let field = values.ty(op.operands[0]).as_field().cloned();
                let Some(field) = field else { continue };
                let need = demand.get(&op.results[0]).cloned().unwrap_or_else(|| field.bounds.clone());
                if !field.bounds.contains(&need) {
                    errors.push(format!(
                        "{}: field too small: the load requires {need} but the field covers only {}",
                        op.describe(),
                        field.bounds
                    ));
                    continue;
                }
                values.set_type(op.results[0], Type::Temp(TempType::with_bounds(need, (*field.elem).clone())));
            }
            _ => {}
        }
    }
    // Region argument types of applies mirror the (now resolved) operand types.
    for op in r.ops.iter_mut() {
        if op.name == "stencil.apply" {
            for (a, v) in op.regions[0].args.clone().into_iter().zip(op.operands.clone()) {
                let t = values.ty(v).clone();
                values.set_type(a, t);
            }
        }
        for sub in op.regions.iter_mut() {
            propagate_region(values, sub, errors);
        }
    }
}

/// Forgets all inferred temp bounds so that propagation can run afresh.
pub(crate) fn reset_temp_bounds(values: &mut ValueTable, r: &Region) {
    r.walk(&mut |op| {
        for v in op.results.iter().chain(op.regions.iter().flat_map(|reg| reg.args.iter())) {
            if let Type::Temp(t) = values.ty(*v).clone() {
                values.set_type(*v, Type::Temp(TempType::unknown(t.rank, *t.elem)));
            }
        }
    });
}

//! Turns a global stencil function into a rank-parametric one.
//!
//! Every field type is replaced by its rank-local counterpart: along the
//! decomposed (leading) dimensions a field covers the local core `[0, n)`
//! widened by the halo its loads need, and the trailing dimensions keep
//! their global bounds. A `dmp.swap` refreshing the halo precedes every
//! `stencil.load`. The original function is kept as a serial reference so
//! drivers can relate local and global data.

use std::collections::HashMap;

use super::strategy::{exchange_templates_at, DecompositionStrategy};
use super::{GridTopology, DOMAIN_ATTR, GRID_ATTR, REFERENCE_ATTR};
use crate::dialects::func::function_type;
use crate::ir::pass::PassError;
use crate::ir::{clone_fresh, Attribute, FieldType, FunctionType, Module, Operation, Region, Type, ValueId, ValueTable};
use crate::stencil::ops::store_bounds;
use crate::stencil::{infer_with_table, propagate_bounds, reset_temp_bounds, AccessExtent, Bounds, SERIAL_REFERENCE_ATTR};

pub fn decompose_stencil(m: &mut Module, topo: &GridTopology, strategy: &dyn DecompositionStrategy) -> Result<(), PassError> {
    propagate_bounds(m)?;
    let targets: Vec<usize> = m
        .body
        .ops
        .iter()
        .enumerate()
        .filter(|(_, f)| f.name == "func.func" && !f.regions.is_empty() && f.attr(SERIAL_REFERENCE_ATTR).is_none())
        .map(|(i, _)| i)
        .collect();
    if targets.is_empty() {
        return Err(PassError::new("decompose: the module has no function to decompose"));
    }
    let mut references = Vec::new();
    for i in targets {
        let func = &m.body.ops[i];
        let name = func.symbol_name().unwrap_or("main").to_string();
        if func.attr(GRID_ATTR).is_some() {
            return Err(PassError::new(format!("decompose: @{name} is already decomposed")));
        }
        let ref_name = format!("{name}_serial");
        if m.function(&ref_name).is_some() {
            return Err(PassError::new(format!("decompose: symbol @{ref_name} is already taken")));
        }
        let mut reference = clone_fresh(&mut m.values, func);
        reference.attributes.insert("sym_name".into(), Attribute::String(ref_name.clone()));
        reference.attributes.insert(SERIAL_REFERENCE_ATTR.into(), Attribute::Unit);
        references.push(reference);

        let func = &mut m.body.ops[i];
        decompose_function(&mut m.values, func, topo, strategy).map_err(|e| PassError::new(format!("decompose @{name}: {}", e.message)))?;
        func.attributes.insert(REFERENCE_ATTR.into(), Attribute::Symbol(ref_name));
    }
    m.body.ops.extend(references);
    propagate_bounds(m)
}

fn decompose_function(values: &mut ValueTable, func: &mut Operation, topo: &GridTopology, strategy: &dyn DecompositionStrategy) -> Result<(), PassError> {
    let body = &func.regions[0];

    // The common store range is the global domain D.
    let mut domain: Option<Bounds> = None;
    let mut conflict = None;
    body.walk(&mut |op| {
        if let Some(b) = store_bounds(op) {
            match &domain {
                None => domain = Some(b.clone()),
                Some(d) if d != b => conflict = Some((d.clone(), b.clone())),
                _ => {}
            }
        }
    });
    if let Some((a, b)) = conflict {
        return Err(PassError::new(format!("stores write different ranges ({a} and {b}); decomposition needs a single domain")));
    }
    let domain = domain.ok_or_else(|| PassError::new("no stencil.store found, so there is no domain to decompose"))?;
    let grid_rank = topo.rank();
    if grid_rank > domain.rank() {
        return Err(PassError::new(format!("grid {topo} has more dimensions than the domain {domain}")));
    }
    for d in 0..grid_rank {
        let extent = domain.ub[d] - domain.lb[d];
        if extent % topo.dims[d] as i64 != 0 {
            return Err(PassError::new(format!(
                "dimension {d} of the domain has {extent} points, which do not divide evenly over {} ranks",
                topo.dims[d]
            )));
        }
    }
    let zero = vec![0; grid_rank];
    let first = strategy.local_bounds(&domain, topo, &zero).map_err(|e| PassError::new(e.to_string()))?;
    let core: Vec<i64> = first.shape();

    // Halo per field type: union of the extents of every load of that type.
    let mut load_type: HashMap<ValueId, FieldType> = HashMap::new();
    body.walk(&mut |op| {
        if op.name == "stencil.load" {
            if let Some(f) = values.ty(op.operands[0]).as_field() {
                load_type.insert(op.results[0], f.clone());
            }
        }
    });
    let mut halo: HashMap<FieldType, AccessExtent> = HashMap::new();
    body.walk(&mut |op| {
        if op.name != "stencil.apply" {
            return;
        }
        for (v, ext) in op.operands.iter().zip(infer_with_table(values, op)) {
            if let Some(ft) = load_type.get(v) {
                halo.entry(ft.clone()).and_modify(|e| *e = e.union(&ext)).or_insert(ext);
            }
        }
    });

    // Rank-local type and swap templates per field type.
    let mut classes: HashMap<FieldType, (FieldType, Vec<Attribute>)> = HashMap::new();
    let mut field_values = Vec::new();
    collect_values(body, &mut field_values);
    field_values.retain(|v| values.ty(*v).as_field().is_some());
    for v in &field_values {
        let ft = values.ty(*v).as_field().unwrap().clone();
        if classes.contains_key(&ft) {
            continue;
        }
        let rank = ft.bounds.rank();
        let width = halo.get(&ft).map_or(vec![0; rank], AccessExtent::halo_width);
        let mut lb = ft.bounds.lb.clone();
        let mut ub = ft.bounds.ub.clone();
        let mut core_at = vec![0; rank];
        let mut core_shape = vec![0; rank];
        for d in 0..rank {
            if d < grid_rank {
                if topo.dims[d] > 1 && width[d] > core[d] {
                    return Err(PassError::new(format!(
                        "decomposition infeasible: halo width {} exceeds the local core of {} points in dimension {d}",
                        width[d], core[d]
                    )));
                }
                lb[d] = -width[d];
                ub[d] = core[d] + width[d];
                core_at[d] = width[d];
                core_shape[d] = core[d];
            } else {
                core_at[d] = domain.lb[d] - ft.bounds.lb[d];
                core_shape[d] = domain.ub[d] - domain.lb[d];
            }
        }
        let swaps = exchange_templates_at(&core_at, &core_shape, &width, topo).into_iter().map(Attribute::Exchange).collect();
        classes.insert(ft.clone(), (FieldType::new(Bounds::new(lb, ub), (*ft.elem).clone()), swaps));
    }

    let grid_attr = strategy.grid_attr(topo);
    let mut region = std::mem::take(&mut func.regions[0]);
    insert_swaps(values, &mut region, &classes, &grid_attr);
    localize_stores(&mut region, &domain, &core, grid_rank);
    for v in field_values {
        let ft = values.ty(v).as_field().unwrap().clone();
        values.set_type(v, Type::Field(classes[&ft].0.clone()));
    }
    reset_temp_bounds(values, &region);
    func.regions[0] = region;

    if let Some(ft) = function_type(func).cloned() {
        let local = |t: &Type| match t {
            Type::Field(f) => classes.get(f).map_or_else(|| t.clone(), |c| Type::Field(c.0.clone())),
            t => t.clone(),
        };
        let new_ft = FunctionType { inputs: ft.inputs.iter().map(local).collect(), results: ft.results.iter().map(local).collect() };
        func.attributes.insert("function_type".into(), Attribute::Type(Type::Function(new_ft)));
    }
    func.attributes.insert(GRID_ATTR.into(), grid_attr);
    func.attributes.insert(DOMAIN_ATTR.into(), Attribute::Bounds(domain));
    Ok(())
}

fn collect_values(r: &Region, out: &mut Vec<ValueId>) {
    out.extend(&r.args);
    for op in &r.ops {
        out.extend(&op.results);
        for sub in &op.regions {
            collect_values(sub, out);
        }
    }
}

fn insert_swaps(values: &ValueTable, r: &mut Region, classes: &HashMap<FieldType, (FieldType, Vec<Attribute>)>, grid: &Attribute) {
    let ops = std::mem::take(&mut r.ops);
    for mut op in ops {
        for sub in op.regions.iter_mut() {
            insert_swaps(values, sub, classes, grid);
        }
        if op.name == "stencil.load" {
            if let Some((_, swaps)) = values.ty(op.operands[0]).as_field().and_then(|f| classes.get(f)) {
                r.ops.push(
                    Operation::new("dmp.swap")
                        .with_operands(vec![op.operands[0]])
                        .with_attr("grid", grid.clone())
                        .with_attr("swaps", Attribute::Array(swaps.clone())),
                );
            }
        }
        r.ops.push(op);
    }
}

fn localize_stores(r: &mut Region, domain: &Bounds, core: &[i64], grid_rank: usize) {
    r.walk_mut(&mut |op| {
        if op.name != "stencil.store" {
            return;
        }
        let mut b = domain.clone();
        for d in 0..grid_rank {
            b.lb[d] = 0;
            b.ub[d] = core[d];
        }
        op.attributes.insert("bounds".into(), Attribute::Bounds(b));
    });
}

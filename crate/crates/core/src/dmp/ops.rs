use crate::dialects::{counts, ensure, OpDef};
use crate::ir::verify::{op_label, VerifyCtx};
use crate::ir::{Attribute, Diagnostic, Module, Operation};
use crate::stencil::ops::access_offset;

use super::{ExchangeDecl, GridTopology, GRID_ATTR};

pub(crate) const OPS: &[OpDef] = &[OpDef::unquoted("dmp.swap", verify_swap)];

pub fn swap_grid(op: &Operation) -> Option<&GridTopology> {
    match op.attr("grid") {
        Some(Attribute::Grid(g)) => Some(g),
        _ => None,
    }
}

pub fn swap_exchanges(op: &Operation) -> Option<Vec<ExchangeDecl>> {
    match op.attr("swaps") {
        Some(Attribute::Array(items)) => items
            .iter()
            .map(|a| match a {
                Attribute::Exchange(e) => Some(e.clone()),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

fn verify_swap(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 0)?;
    let ty = ctx.ty(op.operands[0]);
    let shape = match ty.buffer_shape() {
        Some(s) => s,
        None => return Err(format!("dmp.swap operates on a buffer (field or memref), found {ty}")),
    };
    let grid = swap_grid(op).ok_or("dmp.swap needs a 'grid' attribute of type #dmp.grid")?;
    let swaps = swap_exchanges(op).ok_or("dmp.swap needs a 'swaps' array of #dmp.exchange attributes")?;
    ensure!(grid.rank() <= shape.len(), "grid {grid} has more dimensions than the swapped buffer");
    for (i, e) in swaps.iter().enumerate() {
        e.validate().map_err(|m| format!("exchange #{i}: {m}"))?;
        ensure!(e.at.len() == shape.len(), "exchange #{i} has rank {} but the buffer has rank {}", e.at.len(), shape.len());
        ensure!(e.to.len() == grid.rank(), "exchange #{i} neighbor offset has rank {} but the grid has rank {}", e.to.len(), grid.rank());
        ensure!(e.fits(&shape), "exchange #{i} ({e}) does not fit inside the buffer of shape {shape:?}");
    }
    Ok(())
}

/// Under decomposition only face neighbors are exchanged, so an access that
/// moves along two or more decomposed dimensions at once would read a
/// corner halo nobody fills.
pub(crate) fn check_corner_accesses(m: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for f in m.functions() {
        let Some(Attribute::Grid(grid)) = f.attr(GRID_ATTR) else { continue };
        let decomposed: Vec<usize> = (0..grid.rank()).filter(|&d| grid.dims[d] > 1).collect();
        f.walk(&mut |op| {
            if op.name != "stencil.access" {
                return;
            }
            let Some(off) = access_offset(op) else { return };
            let moving = decomposed.iter().filter(|&&d| off.get(d).is_some_and(|&o| o != 0)).count();
            if moving > 1 {
                out.push(Diagnostic::new(
                    op,
                    format!("{} > stencil.apply > stencil.access", op_label(f)),
                    format!("diagonal access {off:?} needs corner halo data, which is not exchanged under decomposition over {grid}"),
                ));
            }
        });
    }
    out
}

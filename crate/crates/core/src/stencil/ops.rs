//! stencil dialect operations: load, apply, access, return, store.

use std::collections::HashMap;

use crate::dialects::{counts, ensure, OpDef};
use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::{op_label, VerifyCtx};
use crate::ir::{Attribute, Diagnostic, Module, Operation, Region, Type, ValueId};
use crate::stencil::Bounds;

pub(crate) const OPS: &[OpDef] = &[
    OpDef::custom("stencil.load", parse_load, print_load, verify_load),
    OpDef::custom("stencil.apply", parse_apply, print_apply, verify_apply),
    OpDef::custom("stencil.access", parse_access, print_access, verify_access),
    OpDef::custom("stencil.return", parse_return, print_return, verify_return),
    OpDef::custom("stencil.store", parse_store, print_store, verify_store),
];

/// Store range of a `stencil.store`.
pub fn store_bounds(op: &Operation) -> Option<&Bounds> {
    match op.attr("bounds") {
        Some(Attribute::Bounds(b)) => Some(b),
        _ => None,
    }
}

/// Offset of a `stencil.access`.
pub fn access_offset(op: &Operation) -> Option<Vec<i64>> {
    op.attr("offset").and_then(|a| a.as_int_array())
}

/// `%t = stencil.load %f : !field<[-1,129]xf64> -> !temp<?xf64>`
fn parse_load(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let f = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let fty = p.parse_type()?;
    p.check_type(f, &fty, loc)?;
    p.expect("->")?;
    let tty = p.parse_type()?;
    st.operands.push(f);
    st.result_types.push(tty);
    Ok(())
}

fn print_load(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" : ");
    let f = p.value_type(op.operands[0]);
    p.ty(f);
    p.write(" -> ");
    let t = p.value_type(op.results[0]);
    p.ty(t);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_load(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    let fty = ctx.ty(op.operands[0]);
    let field = fty.as_field().ok_or_else(|| format!("stencil.load reads a !field, found {fty}"))?;
    let rty = ctx.ty(op.results[0]);
    let temp = rty.as_temp().ok_or_else(|| format!("stencil.load produces a !temp, found {rty}"))?;
    ensure!(temp.rank == field.bounds.rank(), "load changes rank from {} to {}", field.bounds.rank(), temp.rank);
    ensure!(temp.elem == field.elem, "load changes element type from {} to {}", field.elem, temp.elem);
    if let Some(b) = &temp.bounds {
        ensure!(field.bounds.contains(b), "field too small: load requires {b} but the field only covers {}", field.bounds);
    }
    Ok(())
}

/// `%r = stencil.apply(%a = %t : !temp<?xf64>) -> !temp<?xf64> { ... }`
fn parse_apply(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    p.expect("(")?;
    let mut args = Vec::new();
    if !p.eat(")") {
        loop {
            let loc = p.location();
            let name = p.value_name()?;
            p.expect("=")?;
            let v = p.operand()?;
            p.expect(":")?;
            let tloc = p.location();
            let ty = p.parse_type()?;
            p.check_type(v, &ty, tloc)?;
            st.operands.push(v);
            args.push((name, ty, loc));
            if p.eat(")") {
                break;
            }
            p.expect(",")?;
        }
    }
    p.expect("->")?;
    st.result_types = p.type_list_or_single()?;
    st.regions.push(p.region(args)?);
    Ok(())
}

fn print_apply(p: &mut Printer<'_>, op: &Operation) {
    let body = &op.regions[0];
    p.write("(");
    for (i, (arg, v)) in body.args.iter().zip(&op.operands).enumerate() {
        if i > 0 {
            p.write(", ");
        }
        p.define(*arg);
        p.value(*arg);
        p.write(" = ");
        p.value(*v);
        p.write(" : ");
        let t = p.value_type(*v);
        p.ty(t);
    }
    p.write(") -> ");
    let tys: Vec<&Type> = op.results.iter().map(|r| p.value_type(*r)).collect();
    if tys.len() == 1 {
        p.ty(tys[0]);
    } else {
        p.write("(");
        p.types(&tys);
        p.write(")");
    }
    p.write(" ");
    p.region(body, false);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_apply(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(!op.results.is_empty(), "stencil.apply must produce at least one result");
    ensure!(op.regions.len() == 1, "stencil.apply has exactly one region");
    let body = &op.regions[0];
    ensure!(body.args.len() == op.operands.len(), "stencil.apply needs one region argument per operand");
    let mut rank = None;
    for (i, r) in op.results.iter().enumerate() {
        let t = ctx.ty(*r);
        let temp = t.as_temp().ok_or_else(|| format!("result #{i} of stencil.apply must be a !temp, found {t}"))?;
        ensure!(*rank.get_or_insert(temp.rank) == temp.rank, "stencil.apply results have different ranks");
    }
    for (i, (a, v)) in body.args.iter().zip(&op.operands).enumerate() {
        let (at, vt) = (ctx.ty(*a), ctx.ty(*v));
        ensure!(at == vt, "region argument #{i} has type {at} but the operand has type {vt}");
        match vt {
            Type::Temp(t) => ensure!(Some(t.rank) == rank, "operand #{i} has rank {} but the results have rank {}", t.rank, rank.unwrap()),
            t if t.is_scalar() => {}
            t => return Err(format!("operand #{i} of stencil.apply must be a !temp or a scalar, found {t}")),
        }
    }
    ensure!(
        body.ops.last().is_some_and(|o| o.name == "stencil.return"),
        "missing stencil.return at the end of the stencil.apply body"
    );
    Ok(())
}

/// `%v = stencil.access %arg[-1, 0] : !temp<?x?xf64>`
fn parse_access(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let t = p.operand()?;
    let offset = p.int_list()?;
    p.expect(":")?;
    let loc = p.location();
    let ty = p.parse_type()?;
    p.check_type(t, &ty, loc)?;
    let elem = match ty.element_type() {
        Some(e) => e.clone(),
        None => return p.error(format!("stencil.access reads a !temp, found {ty}")),
    };
    st.operands.push(t);
    st.attributes.insert("offset".into(), Attribute::int_array(&offset));
    st.result_types.push(elem);
    Ok(())
}

fn print_access(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    let off = access_offset(op).unwrap_or_default();
    p.write(&format!("{off:?}"));
    p.write(" : ");
    let t = p.value_type(op.operands[0]);
    p.ty(t);
    p.attr_dict(&op.attributes, &["offset"]);
}

fn verify_access(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    let parent = ctx.parent.filter(|p| p.name == "stencil.apply").ok_or("stencil.access must be directly inside a stencil.apply")?;
    ensure!(parent.regions[0].args.contains(&op.operands[0]), "stencil.access must read an argument of the enclosing stencil.apply");
    let ty = ctx.ty(op.operands[0]);
    let temp = ty.as_temp().ok_or_else(|| format!("stencil.access reads a !temp, found {ty}"))?;
    let offset = access_offset(op).ok_or("stencil.access needs an integer-array 'offset' attribute")?;
    ensure!(
        offset.len() == temp.rank,
        "access offset has rank {} but the accessed temp has rank {}",
        offset.len(),
        temp.rank
    );
    ensure!(ctx.ty(op.results[0]) == &*temp.elem, "stencil.access yields the element type {}", temp.elem);
    Ok(())
}

/// `stencil.return %a, %b : f64, f64`
fn parse_return(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    st.operands = p.operand_list_until(":")?;
    p.expect(":")?;
    let loc = p.location();
    let types = p.type_list_until("\n")?;
    if types.len() != st.operands.len() {
        return p.error("stencil.return needs one type per operand");
    }
    for (v, t) in st.operands.clone().into_iter().zip(&types) {
        p.check_type(v, t, loc)?;
    }
    Ok(())
}

fn print_return(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.values(&op.operands);
    p.write(" : ");
    let tys: Vec<&Type> = op.operands.iter().map(|v| p.value_type(*v)).collect();
    p.types(&tys);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_return(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(op.results.is_empty(), "stencil.return has no results");
    let parent = ctx.parent.filter(|p| p.name == "stencil.apply").ok_or("stencil.return must terminate a stencil.apply body")?;
    ensure!(
        op.operands.len() == parent.results.len(),
        "stencil.return yields {} value(s) but the apply has {} result(s)",
        op.operands.len(),
        parent.results.len()
    );
    for (i, (v, r)) in op.operands.iter().zip(&parent.results).enumerate() {
        let elem = ctx.ty(*r).element_type().unwrap();
        ensure!(ctx.ty(*v) == elem, "returned value #{i} has type {} but the result element type is {elem}", ctx.ty(*v));
    }
    Ok(())
}

/// `stencil.store %t to %f (<[0], [128]>) : !temp<?xf64> to !field<[0,128]xf64>`
fn parse_store(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let t = p.operand()?;
    p.expect_keyword("to")?;
    let f = p.operand()?;
    p.expect("(")?;
    let loc = p.location();
    p.expect("<")?;
    let b = p.bounds_pair(loc)?;
    p.expect(">")?;
    p.expect(")")?;
    p.expect(":")?;
    let tloc = p.location();
    let tt = p.parse_type()?;
    p.check_type(t, &tt, tloc)?;
    p.expect_keyword("to")?;
    let floc = p.location();
    let ft = p.parse_type()?;
    p.check_type(f, &ft, floc)?;
    st.operands = vec![t, f];
    st.attributes.insert("bounds".into(), Attribute::Bounds(b));
    Ok(())
}

fn print_store(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" to ");
    p.value(op.operands[1]);
    if let Some(b) = store_bounds(op) {
        p.write(&format!(" (<{:?}, {:?}>)", b.lb, b.ub));
    }
    p.write(" : ");
    let t = p.value_type(op.operands[0]);
    p.ty(t);
    p.write(" to ");
    let f = p.value_type(op.operands[1]);
    p.ty(f);
    p.attr_dict(&op.attributes, &["bounds"]);
}

fn verify_store(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 2, 0)?;
    let tt = ctx.ty(op.operands[0]);
    let temp = tt.as_temp().ok_or_else(|| format!("stencil.store writes a !temp, found {tt}"))?;
    let ft = ctx.ty(op.operands[1]);
    let field = ft.as_field().ok_or_else(|| format!("stencil.store targets a !field, found {ft}"))?;
    let b = store_bounds(op).ok_or("stencil.store needs explicit 'bounds'")?;
    ensure!(b.rank() == field.bounds.rank(), "store range has rank {} but the field has rank {}", b.rank(), field.bounds.rank());
    ensure!(temp.rank == b.rank(), "stored temp has rank {} but the store range has rank {}", temp.rank, b.rank());
    ensure!(temp.elem == field.elem, "stored element type {} differs from the field's {}", temp.elem, field.elem);
    ensure!(field.bounds.contains(b), "store range {b} exceeds the field bounds {}", field.bounds);
    if let Some(tb) = &temp.bounds {
        ensure!(tb.contains(b), "store range {b} exceeds the bounds {tb} of the stored temp");
    }
    Ok(())
}

/// Two stores into the same field within one block must not overlap.
pub(crate) fn check_store_overlap(m: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    fn visit(r: &Region, path: &str, out: &mut Vec<Diagnostic>) {
        let mut seen: HashMap<ValueId, Vec<&Bounds>> = HashMap::new();
        for op in &r.ops {
            if op.name == "stencil.store" && op.operands.len() == 2 {
                if let Some(b) = store_bounds(op) {
                    let prev = seen.entry(op.operands[1]).or_default();
                    if let Some(o) = prev.iter().find(|o| o.rank() == b.rank() && o.overlaps(b)) {
                        out.push(Diagnostic::new(
                            op,
                            format!("{path} > stencil.store"),
                            format!("store range {b} overlaps an earlier store range {o} to the same field"),
                        ));
                    }
                    prev.push(b);
                }
            }
            let inner = if path.is_empty() { op_label(op) } else { format!("{path} > {}", op_label(op)) };
            for sub in &op.regions {
                visit(sub, &inner, out);
            }
        }
    }
    visit(&m.body, "", &mut out);
    out
}

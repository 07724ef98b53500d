use super::{counts, ensure, OpDef};
use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::VerifyCtx;
use crate::ir::{Operation, Type};

pub(super) const OPS: &[OpDef] = &[
    OpDef::custom("memref.alloc", parse_alloc, print_alloc, verify_alloc),
    OpDef::custom("memref.dealloc", parse_dealloc, print_dealloc, verify_dealloc),
    OpDef::custom("memref.load", parse_load, print_load, verify_load),
    OpDef::custom("memref.store", parse_store, print_store, verify_store),
    OpDef::custom(
        "memref.extract_aligned_pointer_as_index",
        parse_extract_ptr,
        print_extract_ptr,
        verify_extract_ptr,
    ),
];

fn memref_type(p: &mut Parser<'_>) -> Result<Type, ParseError> {
    let loc = p.location();
    let ty = p.parse_type()?;
    if ty.as_memref().is_none() {
        return p.error(format!("expected a memref type at {loc}, found {ty}"));
    }
    Ok(ty)
}

/// `%m = memref.alloc() : memref<4x4xf64>`
fn parse_alloc(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    p.expect("(")?;
    p.expect(")")?;
    p.expect(":")?;
    st.result_types.push(memref_type(p)?);
    Ok(())
}

fn print_alloc(p: &mut Printer<'_>, op: &Operation) {
    p.write("() : ");
    let ty = p.value_type(op.results[0]);
    p.ty(ty);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_alloc(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 0, 1)?;
    let ty = ctx.ty(op.results[0]);
    let m = ty.as_memref().ok_or_else(|| format!("memref.alloc must produce a memref, found {ty}"))?;
    ensure!(m.shape.iter().all(|&d| d > 0), "memref extents must be positive");
    let total = m.shape.iter().try_fold(1i64, |acc, &d| acc.checked_mul(d));
    ensure!(total.is_some(), "memref element count overflows the index type");
    Ok(())
}

/// `memref.dealloc %m : memref<4xf64>`
fn parse_dealloc(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let m = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let ty = memref_type(p)?;
    p.check_type(m, &ty, loc)?;
    st.operands.push(m);
    Ok(())
}

fn print_dealloc(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" : ");
    let ty = p.value_type(op.operands[0]);
    p.ty(ty);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_dealloc(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 0)?;
    ensure!(ctx.ty(op.operands[0]).as_memref().is_some(), "memref.dealloc expects a memref");
    Ok(())
}

fn index_list(p: &mut Parser<'_>) -> Result<Vec<crate::ir::ValueId>, ParseError> {
    p.expect("[")?;
    let idx = p.operand_list_until("]")?;
    p.expect("]")?;
    let loc = p.location();
    for v in &idx {
        p.check_type(*v, &Type::Index, loc)?;
    }
    Ok(idx)
}

/// `%v = memref.load %m[%i, %j] : memref<4x4xf64>`
fn parse_load(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let m = p.operand()?;
    let idx = index_list(p)?;
    p.expect(":")?;
    let loc = p.location();
    let ty = memref_type(p)?;
    p.check_type(m, &ty, loc)?;
    st.operands.push(m);
    st.operands.extend(idx);
    st.result_types.push(ty.element_type().unwrap().clone());
    Ok(())
}

fn print_load(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write("[");
    p.values(&op.operands[1..]);
    p.write("] : ");
    let ty = p.value_type(op.operands[0]);
    p.ty(ty);
    p.attr_dict(&op.attributes, &[]);
}

fn check_indices(op: &Operation, ctx: &VerifyCtx<'_>, buf: usize) -> Result<(), String> {
    let ty = ctx.ty(op.operands[buf]);
    let m = ty.as_memref().ok_or_else(|| format!("expected a memref operand, found {ty}"))?;
    let n_idx = op.operands.len() - buf - 1;
    ensure!(n_idx == m.shape.len(), "{} indices given for a rank-{} memref", n_idx, m.shape.len());
    for v in &op.operands[buf + 1..] {
        ensure!(*ctx.ty(*v) == Type::Index, "memref indices must be index, found {}", ctx.ty(*v));
    }
    Ok(())
}

fn verify_load(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(!op.operands.is_empty() && op.results.len() == 1 && op.regions.is_empty(), "memref.load takes a buffer plus indices and yields one value");
    check_indices(op, ctx, 0)?;
    let elem = ctx.ty(op.operands[0]).element_type().unwrap();
    ensure!(ctx.ty(op.results[0]) == elem, "memref.load result must have the element type {elem}");
    Ok(())
}

/// `memref.store %v, %m[%i] : memref<4xf64>`
fn parse_store(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let v = p.operand()?;
    p.expect(",")?;
    let m = p.operand()?;
    let idx = index_list(p)?;
    p.expect(":")?;
    let loc = p.location();
    let ty = memref_type(p)?;
    p.check_type(m, &ty, loc)?;
    p.check_type(v, ty.element_type().unwrap(), loc)?;
    st.operands = vec![v, m];
    st.operands.extend(idx);
    Ok(())
}

fn print_store(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(", ");
    p.value(op.operands[1]);
    p.write("[");
    p.values(&op.operands[2..]);
    p.write("] : ");
    let ty = p.value_type(op.operands[1]);
    p.ty(ty);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_store(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(op.operands.len() >= 2 && op.results.is_empty() && op.regions.is_empty(), "memref.store takes a value, a buffer and indices");
    check_indices(op, ctx, 1)?;
    let elem = ctx.ty(op.operands[1]).element_type().unwrap();
    ensure!(ctx.ty(op.operands[0]) == elem, "stored value must have the element type {elem}");
    Ok(())
}

/// `%p = memref.extract_aligned_pointer_as_index %m : (memref<64x2xf64>) -> index`
/// (the parentheses are optional)
fn parse_extract_ptr(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let m = p.operand()?;
    p.expect(":")?;
    let paren = p.eat("(");
    let loc = p.location();
    let ty = memref_type(p)?;
    if paren {
        p.expect(")")?;
    }
    p.check_type(m, &ty, loc)?;
    p.expect("->")?;
    let rloc = p.location();
    let rt = p.parse_type()?;
    if rt != Type::Index {
        return p.error(format!("pointer extraction yields index, found {rt} at {rloc}"));
    }
    st.operands.push(m);
    st.result_types.push(Type::Index);
    Ok(())
}

fn print_extract_ptr(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" : (");
    let ty = p.value_type(op.operands[0]);
    p.ty(ty);
    p.write(") -> index");
    p.attr_dict(&op.attributes, &[]);
}

fn verify_extract_ptr(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    ensure!(ctx.ty(op.operands[0]).as_memref().is_some(), "expected a memref operand");
    ensure!(*ctx.ty(op.results[0]) == Type::Index, "result must be index");
    Ok(())
}

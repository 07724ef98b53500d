use super::{counts, ensure, OpDef};
use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::VerifyCtx;
use crate::ir::{Attribute, Operation, Type};

pub const CMPI_PREDICATES: &[&str] = &["eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge"];

const FLOAT_BINARY: &[&str] = &["arith.addf", "arith.subf", "arith.mulf", "arith.divf", "arith.maxf", "arith.minf"];
const INT_BINARY: &[&str] = &["arith.addi", "arith.subi", "arith.muli", "arith.divsi", "arith.remsi", "arith.andi", "arith.ori"];

pub(super) const OPS: &[OpDef] = &[
    OpDef::custom("arith.constant", parse_constant, print_constant, verify_constant),
    OpDef::custom("arith.addf", parse_binary, print_binary, verify_float_binary),
    OpDef::custom("arith.subf", parse_binary, print_binary, verify_float_binary),
    OpDef::custom("arith.mulf", parse_binary, print_binary, verify_float_binary),
    OpDef::custom("arith.divf", parse_binary, print_binary, verify_float_binary),
    OpDef::custom("arith.maxf", parse_binary, print_binary, verify_float_binary),
    OpDef::custom("arith.minf", parse_binary, print_binary, verify_float_binary),
    OpDef::custom("arith.negf", parse_unary, print_binary, verify_negf),
    OpDef::custom("arith.addi", parse_binary, print_binary, verify_int_binary),
    OpDef::custom("arith.subi", parse_binary, print_binary, verify_int_binary),
    OpDef::custom("arith.muli", parse_binary, print_binary, verify_int_binary),
    OpDef::custom("arith.divsi", parse_binary, print_binary, verify_int_binary),
    OpDef::custom("arith.remsi", parse_binary, print_binary, verify_int_binary),
    OpDef::custom("arith.andi", parse_binary, print_binary, verify_int_binary),
    OpDef::custom("arith.ori", parse_binary, print_binary, verify_int_binary),
    OpDef::custom("arith.cmpi", parse_cmpi, print_cmpi, verify_cmpi),
    OpDef::custom("arith.select", parse_select, print_select, verify_select),
    OpDef::custom("arith.index_cast", parse_index_cast, print_index_cast, verify_index_cast),
    OpDef::custom("arith.sitofp", parse_index_cast, print_index_cast, verify_sitofp),
];

/// `arith.constant 42 : i32`, `arith.constant 1.5 : f64`, `arith.constant true`
fn parse_constant(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let loc = p.location();
    let value = p.parse_attribute()?;
    let ty = match &value {
        Attribute::Int { ty, .. } | Attribute::Float { ty, .. } => ty.clone(),
        _ => return p.error(format!("arith.constant expects a numeric literal at {loc}")),
    };
    st.attributes.insert("value".into(), value);
    st.result_types.push(ty);
    Ok(())
}

fn print_constant(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    match op.attr("value") {
        Some(Attribute::Int { value, ty: Type::I64 }) => p.write(&format!("{value} : i64")),
        Some(a) => p.attr(a),
        None => p.write("<missing>"),
    }
    p.attr_dict(&op.attributes, &["value"]);
}

fn verify_constant(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 0, 1)?;
    let ty = ctx.ty(op.results[0]);
    match op.attr("value") {
        Some(Attribute::Int { value, ty: at }) => {
            ensure!(at == ty, "constant attribute type {at} differs from result type {ty}");
            ensure!(Attribute::int_fits(*value, at), "constant {value} does not fit in {at}");
        }
        Some(Attribute::Float { ty: at, .. }) => {
            ensure!(at == ty, "constant attribute type {at} differs from result type {ty}");
        }
        _ => return Err("arith.constant needs a numeric 'value' attribute".into()),
    }
    Ok(())
}

/// `arith.addf %a, %b : f64`
fn parse_binary(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let a = p.operand()?;
    p.expect(",")?;
    let b = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let ty = p.parse_type()?;
    p.check_type(a, &ty, loc)?;
    p.check_type(b, &ty, loc)?;
    st.operands = vec![a, b];
    st.result_types.push(ty);
    Ok(())
}

fn parse_unary(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let a = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let ty = p.parse_type()?;
    p.check_type(a, &ty, loc)?;
    st.operands = vec![a];
    st.result_types.push(ty);
    Ok(())
}

fn print_binary(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.values(&op.operands);
    p.write(" : ");
    let ty = p.value_type(op.results[0]);
    p.ty(ty);
    p.attr_dict(&op.attributes, &[]);
}

fn same_types(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<Type, String> {
    let ty = ctx.ty(op.results[0]);
    for (i, v) in op.operands.iter().enumerate() {
        let t = ctx.ty(*v);
        ensure!(t == ty, "operand #{i} has type {t} but the result has type {ty}");
    }
    Ok(ty.clone())
}

fn verify_float_binary(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    debug_assert!(FLOAT_BINARY.contains(&op.name.as_str()));
    counts(op, 2, 1)?;
    let ty = same_types(op, ctx)?;
    ensure!(ty.is_float(), "{} expects floating-point operands, found {ty}", op.name);
    Ok(())
}

fn verify_negf(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    let ty = same_types(op, ctx)?;
    ensure!(ty.is_float(), "arith.negf expects a floating-point operand, found {ty}");
    Ok(())
}

fn verify_int_binary(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    debug_assert!(INT_BINARY.contains(&op.name.as_str()));
    counts(op, 2, 1)?;
    let ty = same_types(op, ctx)?;
    ensure!(ty.is_integer(), "{} expects integer operands, found {ty}", op.name);
    Ok(())
}

/// `arith.cmpi slt, %a, %b : index`
fn parse_cmpi(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let pred = p.ident()?;
    if !CMPI_PREDICATES.contains(&pred.as_str()) {
        return p.error(format!("unknown comparison predicate '{pred}'"));
    }
    p.expect(",")?;
    let a = p.operand()?;
    p.expect(",")?;
    let b = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let ty = p.parse_type()?;
    p.check_type(a, &ty, loc)?;
    p.check_type(b, &ty, loc)?;
    st.operands = vec![a, b];
    st.attributes.insert("predicate".into(), Attribute::string(pred));
    st.result_types.push(Type::I1);
    Ok(())
}

fn print_cmpi(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.write(op.attr("predicate").and_then(|a| a.as_str()).unwrap_or("?"));
    p.write(", ");
    p.values(&op.operands);
    p.write(" : ");
    let ty = p.value_type(op.operands[0]);
    p.ty(ty);
    p.attr_dict(&op.attributes, &["predicate"]);
}

fn verify_cmpi(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 2, 1)?;
    let pred = op.attr("predicate").and_then(|a| a.as_str()).ok_or("arith.cmpi needs a 'predicate' attribute")?;
    ensure!(CMPI_PREDICATES.contains(&pred), "unknown comparison predicate '{pred}'");
    let (a, b) = (ctx.ty(op.operands[0]), ctx.ty(op.operands[1]));
    ensure!(a == b, "comparison of mixed types {a} and {b}");
    ensure!(a.is_integer(), "arith.cmpi compares integers, found {a}");
    ensure!(*ctx.ty(op.results[0]) == Type::I1, "arith.cmpi produces i1");
    Ok(())
}

/// `arith.select %c, %a, %b : i32`
fn parse_select(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let c = p.operand()?;
    p.expect(",")?;
    let a = p.operand()?;
    p.expect(",")?;
    let b = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let ty = p.parse_type()?;
    p.check_type(c, &Type::I1, loc)?;
    p.check_type(a, &ty, loc)?;
    p.check_type(b, &ty, loc)?;
    st.operands = vec![c, a, b];
    st.result_types.push(ty);
    Ok(())
}

fn print_select(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.values(&op.operands);
    p.write(" : ");
    let ty = p.value_type(op.results[0]);
    p.ty(ty);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_select(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 3, 1)?;
    ensure!(*ctx.ty(op.operands[0]) == Type::I1, "select condition must be i1");
    let ty = ctx.ty(op.results[0]);
    ensure!(ctx.ty(op.operands[1]) == ty && ctx.ty(op.operands[2]) == ty, "select operands must match the result type {ty}");
    Ok(())
}

/// `arith.index_cast %a : index to i64`
fn parse_index_cast(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let a = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let from = p.parse_type()?;
    p.check_type(a, &from, loc)?;
    p.expect_keyword("to")?;
    let to = p.parse_type()?;
    st.operands = vec![a];
    st.result_types.push(to);
    Ok(())
}

fn print_index_cast(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" : ");
    let from = p.value_type(op.operands[0]);
    p.ty(from);
    p.write(" to ");
    let to = p.value_type(op.results[0]);
    p.ty(to);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_index_cast(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    let (from, to) = (ctx.ty(op.operands[0]), ctx.ty(op.results[0]));
    ensure!(
        (*from == Type::Index && matches!(to, Type::I32 | Type::I64)) || (*to == Type::Index && matches!(from, Type::I32 | Type::I64)),
        "arith.index_cast converts between index and i32/i64, not {from} to {to}"
    );
    Ok(())
}

fn verify_sitofp(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    let (from, to) = (ctx.ty(op.operands[0]), ctx.ty(op.results[0]));
    ensure!(matches!(from, Type::I32 | Type::I64) && to.is_float(), "arith.sitofp converts i32/i64 to a float, not {from} to {to}");
    Ok(())
}

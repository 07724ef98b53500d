use super::{counts, ensure, OpDef};
use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::VerifyCtx;
use crate::ir::{Operation, Type};

pub(super) const OPS: &[OpDef] = &[OpDef::custom("llvm.inttoptr", parse_inttoptr, print_inttoptr, verify_inttoptr)];

/// `%p = llvm.inttoptr %i : i64 to !llvm.ptr`
fn parse_inttoptr(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let v = p.operand()?;
    p.expect(":")?;
    let loc = p.location();
    let from = p.parse_type()?;
    p.check_type(v, &from, loc)?;
    p.expect_keyword("to")?;
    let to = p.parse_type()?;
    st.operands.push(v);
    st.result_types.push(to);
    Ok(())
}

fn print_inttoptr(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" : ");
    let from = p.value_type(op.operands[0]);
    p.ty(from);
    p.write(" to !llvm.ptr");
    p.attr_dict(&op.attributes, &[]);
}

fn verify_inttoptr(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    ensure!(*ctx.ty(op.operands[0]) == Type::I64, "llvm.inttoptr expects an i64 address");
    ensure!(*ctx.ty(op.results[0]) == Type::LlvmPtr, "llvm.inttoptr produces !llvm.ptr");
    Ok(())
}

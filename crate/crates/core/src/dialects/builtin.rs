use super::{counts, ensure, OpDef};
use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::VerifyCtx;
use crate::ir::{Operation, Type};

pub(super) const OPS: &[OpDef] = &[OpDef::custom("builtin.unrealized_conversion_cast", parse_cast, print_cast, verify_cast)];

/// `%r = builtin.unrealized_conversion_cast %v : T to U`
pub(crate) fn parse_cast(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
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

pub(crate) fn print_cast(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" : ");
    let from = p.value_type(op.operands[0]);
    p.ty(from);
    p.write(" to ");
    let to = p.value_type(op.results[0]);
    p.ty(to);
}

fn verify_cast(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    counts(op, 1, 1)?;
    let from = ctx.ty(op.operands[0]);
    let to = ctx.ty(op.results[0]);
    // Only the field <-> memref view used by the stencil lowering is allowed.
    match (from, to) {
        (Type::Field(f), Type::MemRef(m)) | (Type::MemRef(m), Type::Field(f)) => {
            ensure!(f.buffer_type() == *m, "cast between {from} and {to} changes the buffer shape");
            Ok(())
        }
        _ => Err(format!("unsupported conversion from {from} to {to}")),
    }
}

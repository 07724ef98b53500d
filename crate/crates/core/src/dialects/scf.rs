use super::{ensure, OpDef};
use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::VerifyCtx;
use crate::ir::{Operation, Type};

pub(super) const OPS: &[OpDef] = &[
    OpDef::custom("scf.for", parse_for, print_for, verify_for),
    OpDef::custom("scf.if", parse_if, print_if, verify_if),
    OpDef::custom("scf.yield", parse_yield, print_yield, verify_yield),
];

/// `scf.for %i = %lo to %hi step %s iter_args(%a = %x) -> (f64) { ... }`
fn parse_for(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let iv_loc = p.location();
    let iv = p.value_name()?;
    p.expect("=")?;
    let lo = p.operand()?;
    p.expect_keyword("to")?;
    let hi = p.operand()?;
    p.expect_keyword("step")?;
    let step = p.operand()?;
    let loc = p.location();
    for v in [lo, hi, step] {
        p.check_type(v, &Type::Index, loc)?;
    }
    st.operands = vec![lo, hi, step];
    let mut args = vec![(iv, Type::Index, iv_loc)];
    if p.eat_keyword("iter_args") {
        p.expect("(")?;
        let mut names = Vec::new();
        if !p.eat(")") {
            loop {
                let nloc = p.location();
                let name = p.value_name()?;
                p.expect("=")?;
                let init = p.operand()?;
                names.push((name, nloc));
                st.operands.push(init);
                if p.eat(")") {
                    break;
                }
                p.expect(",")?;
            }
        }
        p.expect("->")?;
        let tloc = p.location();
        let types = p.type_list_or_single()?;
        if types.len() != names.len() {
            return p.error(format!("iter_args declares {} value(s) but {} result type(s)", names.len(), types.len()));
        }
        for (i, ty) in types.iter().enumerate() {
            p.check_type(st.operands[3 + i], ty, tloc)?;
        }
        for ((name, nloc), ty) in names.into_iter().zip(types.iter()) {
            args.push((name, ty.clone(), nloc));
        }
        st.result_types = types;
    }
    st.regions.push(p.region(args)?);
    Ok(())
}

fn print_for(p: &mut Printer<'_>, op: &Operation) {
    let region = &op.regions[0];
    p.write(" ");
    p.define(region.args[0]);
    p.value(region.args[0]);
    p.write(" = ");
    p.value(op.operands[0]);
    p.write(" to ");
    p.value(op.operands[1]);
    p.write(" step ");
    p.value(op.operands[2]);
    if op.operands.len() > 3 {
        p.write(" iter_args(");
        for (i, (arg, init)) in region.args[1..].iter().zip(&op.operands[3..]).enumerate() {
            if i > 0 {
                p.write(", ");
            }
            p.define(*arg);
            p.value(*arg);
            p.write(" = ");
            p.value(*init);
        }
        p.write(") -> (");
        let tys: Vec<&Type> = op.results.iter().map(|r| p.value_type(*r)).collect();
        p.types(&tys);
        p.write(")");
    }
    p.write(" ");
    p.region(region, false);
    p.attr_dict(&op.attributes, &[]);
}

fn verify_for(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(op.operands.len() >= 3, "scf.for needs lower bound, upper bound and step");
    for (i, v) in op.operands[..3].iter().enumerate() {
        let t = ctx.ty(*v);
        ensure!(*t == Type::Index, "loop bound/step #{i} must be index, found {t}");
    }
    ensure!(op.regions.len() == 1, "scf.for has exactly one region");
    let n_iter = op.operands.len() - 3;
    ensure!(op.results.len() == n_iter, "scf.for yields {n_iter} value(s) but declares {} result(s)", op.results.len());
    let body = &op.regions[0];
    ensure!(body.args.len() == 1 + n_iter, "scf.for body must take the induction variable plus one argument per iter_arg");
    ensure!(*ctx.ty(body.args[0]) == Type::Index, "induction variable must be index");
    for i in 0..n_iter {
        let (init, arg, res) = (ctx.ty(op.operands[3 + i]), ctx.ty(body.args[1 + i]), ctx.ty(op.results[i]));
        ensure!(init == arg && arg == res, "iter_arg #{i} has inconsistent types {init}, {arg}, {res}");
    }
    ensure!(
        body.ops.last().is_some_and(|o| o.name == "scf.yield"),
        "scf.for body must end with scf.yield"
    );
    Ok(())
}

/// `scf.if %c { ... } else { ... }`
fn parse_if(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let c = p.operand()?;
    let loc = p.location();
    p.check_type(c, &Type::I1, loc)?;
    st.operands.push(c);
    st.regions.push(p.region(Vec::new())?);
    if p.eat_keyword("else") {
        st.regions.push(p.region(Vec::new())?);
    }
    Ok(())
}

fn print_if(p: &mut Printer<'_>, op: &Operation) {
    p.write(" ");
    p.value(op.operands[0]);
    p.write(" ");
    p.region(&op.regions[0], false);
    if let Some(r) = op.regions.get(1) {
        p.write(" else ");
        p.region(r, false);
    }
    p.attr_dict(&op.attributes, &[]);
}

fn verify_if(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(op.operands.len() == 1, "scf.if takes exactly one condition");
    ensure!(*ctx.ty(op.operands[0]) == Type::I1, "scf.if condition must be i1");
    ensure!(op.results.is_empty(), "scf.if does not produce results");
    ensure!((1..=2).contains(&op.regions.len()), "scf.if has a then region and an optional else region");
    for r in &op.regions {
        ensure!(r.args.is_empty(), "scf.if regions take no arguments");
        ensure!(r.ops.last().is_some_and(|o| o.name == "scf.yield"), "scf.if regions must end with scf.yield");
    }
    Ok(())
}

/// `scf.yield %a, %b : f64, f64`
fn parse_yield(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    if p.peek() == Some(b'%') {
        st.operands = p.operand_list_until(":")?;
        p.expect(":")?;
        let loc = p.location();
        let types = p.type_list_until("\n")?;
        if types.len() != st.operands.len() {
            return p.error("scf.yield needs one type per operand");
        }
        for (v, t) in st.operands.clone().into_iter().zip(&types) {
            p.check_type(v, t, loc)?;
        }
    }
    Ok(())
}

fn print_yield(p: &mut Printer<'_>, op: &Operation) {
    if !op.operands.is_empty() {
        p.write(" ");
        p.values(&op.operands);
        p.write(" : ");
        let tys: Vec<&Type> = op.operands.iter().map(|v| p.value_type(*v)).collect();
        p.types(&tys);
    }
    p.attr_dict(&op.attributes, &[]);
}

fn verify_yield(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(op.results.is_empty(), "scf.yield has no results");
    match ctx.parent {
        Some(parent) if parent.name == "scf.for" => {
            let expected: Vec<&Type> = parent.results.iter().map(|r| ctx.ty(*r)).collect();
            let actual: Vec<&Type> = op.operands.iter().map(|v| ctx.ty(*v)).collect();
            ensure!(expected == actual, "scf.yield values do not match the loop's iter_args types");
            Ok(())
        }
        Some(parent) if parent.name == "scf.if" => {
            ensure!(op.operands.is_empty(), "scf.yield inside scf.if takes no operands");
            Ok(())
        }
        _ => Err("scf.yield must terminate an scf.for or scf.if body".into()),
    }
}

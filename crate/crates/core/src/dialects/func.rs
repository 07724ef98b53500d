use super::{ensure, OpDef};
use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::VerifyCtx;
use crate::ir::{Attribute, FunctionType, Operation, Type};

pub(super) const OPS: &[OpDef] = &[
    OpDef::custom("func.func", parse_func, print_func, verify_func),
    OpDef::custom("func.call", parse_call, print_call, verify_call),
    OpDef::custom("func.return", parse_return, print_return, verify_return),
];

/// Signature of a `func.func`, from its `function_type` attribute.
pub fn function_type(op: &Operation) -> Option<&FunctionType> {
    match op.attr("function_type") {
        Some(Attribute::Type(Type::Function(ft))) => Some(ft),
        _ => None,
    }
}

/// `func.func @f(%a: f64) -> f64 attributes {k = v} { ... }` or the
/// body-less declaration `func.func @MPI_Send(!llvm.ptr, i32)`.
fn parse_func(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let name = p.symbol()?;
    p.expect("(")?;
    let mut args = Vec::new();
    let mut inputs = Vec::new();
    let mut named = false;
    if !p.eat(")") {
        named = p.peek() == Some(b'%');
        loop {
            if named {
                let loc = p.location();
                let n = p.value_name()?;
                p.expect(":")?;
                let ty = p.parse_type()?;
                inputs.push(ty.clone());
                args.push((n, ty, loc));
            } else {
                inputs.push(p.parse_type()?);
            }
            if p.eat(")") {
                break;
            }
            p.expect(",")?;
        }
    }
    let results = if p.eat("->") { p.type_list_or_single()? } else { Vec::new() };
    st.attributes.insert("sym_name".into(), Attribute::String(name));
    st.attributes.insert("function_type".into(), Attribute::Type(Type::Function(FunctionType { inputs: inputs.clone(), results })));
    if p.eat_keyword("attributes") {
        for (k, v) in p.attr_dict()? {
            st.attributes.insert(k, v);
        }
    }
    let has_body = p.peek() == Some(b'{') && (named || inputs.is_empty());
    if has_body {
        st.regions.push(p.region(args)?);
    } else if named {
        return p.error("function with named arguments needs a body");
    }
    Ok(())
}

fn print_func(p: &mut Printer<'_>, op: &Operation) {
    p.write(" @");
    p.write(op.symbol_name().unwrap_or("?"));
    p.write("(");
    let empty = FunctionType { inputs: Vec::new(), results: Vec::new() };
    let ft = function_type(op).unwrap_or(&empty);
    match op.regions.first() {
        Some(body) => {
            for (i, a) in body.args.iter().enumerate() {
                if i > 0 {
                    p.write(", ");
                }
                p.define(*a);
                p.value(*a);
                p.write(": ");
                let t = p.value_type(*a);
                p.ty(t);
            }
        }
        None => {
            let tys: Vec<&Type> = ft.inputs.iter().collect();
            p.types(&tys);
        }
    }
    p.write(")");
    match ft.results.as_slice() {
        [] => {}
        [single] if !matches!(single, Type::Function(_)) => {
            p.write(" -> ");
            p.ty(single);
        }
        many => {
            p.write(" -> (");
            let tys: Vec<&Type> = many.iter().collect();
            p.types(&tys);
            p.write(")");
        }
    }
    if op.attributes.keys().any(|k| k != "sym_name" && k != "function_type") {
        p.write(" attributes");
        p.attr_dict(&op.attributes, &["sym_name", "function_type"]);
    }
    if let Some(body) = op.regions.first() {
        p.write(" ");
        p.region(body, false);
    }
}

fn verify_func(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(ctx.parent.is_none(), "func.func must appear at module level");
    ensure!(op.operands.is_empty() && op.results.is_empty(), "func.func has no operands or results");
    ensure!(op.symbol_name().is_some(), "func.func needs a 'sym_name' string attribute");
    let ft = function_type(op).ok_or("func.func needs a 'function_type' attribute")?;
    ensure!(op.regions.len() <= 1, "func.func has at most one region");
    if let Some(body) = op.regions.first() {
        let args: Vec<&Type> = body.args.iter().map(|a| ctx.ty(*a)).collect();
        let inputs: Vec<&Type> = ft.inputs.iter().collect();
        ensure!(args == inputs, "entry block arguments do not match the function signature");
        ensure!(
            body.ops.last().is_some_and(|o| o.name == "func.return"),
            "function body must end with func.return"
        );
    }
    let name = op.symbol_name().unwrap();
    let dupes = ctx.module.functions().filter(|f| f.symbol_name() == Some(name)).count();
    ensure!(dupes == 1, "symbol @{name} is defined {dupes} times");
    Ok(())
}

/// `%r = func.call @f(%a, %b) : (f64, f64) -> f64`
fn parse_call(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    let callee = p.symbol()?;
    p.expect("(")?;
    st.operands = p.operand_list_until(")")?;
    p.expect(")")?;
    p.expect(":")?;
    let loc = p.location();
    let ft = p.function_type()?;
    if ft.inputs.len() != st.operands.len() {
        return p.error(format!("call passes {} argument(s) but the signature lists {}", st.operands.len(), ft.inputs.len()));
    }
    for (v, t) in st.operands.clone().into_iter().zip(&ft.inputs) {
        p.check_type(v, t, loc)?;
    }
    st.attributes.insert("callee".into(), Attribute::Symbol(callee));
    st.result_types = ft.results;
    Ok(())
}

fn print_call(p: &mut Printer<'_>, op: &Operation) {
    p.write(" @");
    p.write(op.attr("callee").and_then(|a| match a {
        Attribute::Symbol(s) => Some(s.as_str()),
        _ => None,
    }).unwrap_or("?"));
    p.write("(");
    p.values(&op.operands);
    p.write(") : ");
    let ft = FunctionType {
        inputs: op.operands.iter().map(|v| p.value_type(*v).clone()).collect(),
        results: op.results.iter().map(|v| p.value_type(*v).clone()).collect(),
    };
    p.ty(&Type::Function(ft));
    p.attr_dict(&op.attributes, &["callee"]);
}

fn verify_call(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    let callee = match op.attr("callee") {
        Some(Attribute::Symbol(s)) => s,
        _ => return Err("func.call needs a 'callee' symbol".into()),
    };
    let target = ctx.module.function(callee).ok_or_else(|| format!("call to unknown function @{callee}"))?;
    let ft = function_type(target).ok_or_else(|| format!("@{callee} has no signature"))?;
    ensure!(
        ft.inputs.len() == op.operands.len(),
        "arity mismatch: @{callee} takes {} argument(s), call passes {}",
        ft.inputs.len(),
        op.operands.len()
    );
    for (i, (v, t)) in op.operands.iter().zip(&ft.inputs).enumerate() {
        ensure!(ctx.ty(*v) == t, "argument #{i} of call to @{callee} has type {}, expected {t}", ctx.ty(*v));
    }
    let results: Vec<&Type> = op.results.iter().map(|r| ctx.ty(*r)).collect();
    let expected: Vec<&Type> = ft.results.iter().collect();
    ensure!(results == expected, "call results do not match the signature of @{callee}");
    Ok(())
}

/// `func.return %a, %b : f64, f64` or plain `func.return`
fn parse_return(p: &mut Parser<'_>, st: &mut OpState) -> Result<(), ParseError> {
    if p.peek() == Some(b'%') {
        st.operands = p.operand_list_until(":")?;
        p.expect(":")?;
        let loc = p.location();
        let types = p.type_list_until("\n")?;
        if types.len() != st.operands.len() {
            return p.error("func.return needs one type per operand");
        }
        for (v, t) in st.operands.clone().into_iter().zip(&types) {
            p.check_type(v, t, loc)?;
        }
    }
    Ok(())
}

fn print_return(p: &mut Printer<'_>, op: &Operation) {
    if !op.operands.is_empty() {
        p.write(" ");
        p.values(&op.operands);
        p.write(" : ");
        let tys: Vec<&Type> = op.operands.iter().map(|v| p.value_type(*v)).collect();
        p.types(&tys);
    }
    p.attr_dict(&op.attributes, &[]);
}

fn verify_return(op: &Operation, ctx: &VerifyCtx<'_>) -> Result<(), String> {
    ensure!(op.results.is_empty(), "func.return has no results");
    let parent = ctx.parent.filter(|p| p.name == "func.func").ok_or("func.return must terminate a function body")?;
    let ft = function_type(parent).ok_or("enclosing function has no signature")?;
    let actual: Vec<&Type> = op.operands.iter().map(|v| ctx.ty(*v)).collect();
    let expected: Vec<&Type> = ft.results.iter().collect();
    ensure!(actual == expected, "func.return values do not match the function's result types");
    Ok(())
}

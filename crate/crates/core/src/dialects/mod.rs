//! Operation registry. Each dialect contributes op definitions with a
//! verifier and, optionally, a custom textual form.

mod arith;
mod builtin;
pub(crate) mod func;
pub use func::function_type;
mod llvm;
mod memref;
mod scf;

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::ir::parser::{OpState, ParseError, Parser};
use crate::ir::printer::Printer;
use crate::ir::verify::VerifyCtx;
use crate::ir::{Diagnostic, Module, Operation};

pub type ParseFn = fn(&mut Parser<'_>, &mut OpState) -> Result<(), ParseError>;
pub type PrintFn = fn(&mut Printer<'_>, &Operation);
pub type VerifyFn = fn(&Operation, &VerifyCtx<'_>) -> Result<(), String>;

#[derive(Clone, Copy)]
pub struct OpDef {
    pub name: &'static str,
    pub parse: Option<ParseFn>,
    pub print: Option<PrintFn>,
    pub verify: VerifyFn,
}

impl OpDef {
    pub const fn new(name: &'static str, verify: VerifyFn) -> Self {
        OpDef { name, parse: None, print: None, verify }
    }

    pub const fn custom(name: &'static str, parse: ParseFn, print: PrintFn, verify: VerifyFn) -> Self {
        OpDef { name, parse: Some(parse), print: Some(print), verify }
    }

    /// Printed as the generic form with the quotes dropped, as in
    /// `dmp.swap(%0) {...} : (memref<...>) -> ()`.
    pub const fn unquoted(name: &'static str, verify: VerifyFn) -> Self {
        OpDef { name, parse: None, print: Some(print_unquoted_generic), verify }
    }
}

fn print_unquoted_generic(p: &mut Printer<'_>, op: &Operation) {
    p.generic_body(op);
}

pub struct Registry {
    ops: HashMap<&'static str, OpDef>,
}

impl Registry {
    pub fn get(&self, name: &str) -> Option<&OpDef> {
        self.ops.get(name)
    }

    pub fn op_names(&self) -> Vec<&'static str> {
        let mut v: Vec<_> = self.ops.keys().copied().collect();
        v.sort_unstable();
        v
    }

    fn add(&mut self, defs: &[OpDef]) {
        for d in defs {
            self.ops.insert(d.name, *d);
        }
    }
}

pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r = Registry { ops: HashMap::new() };
        r.add(builtin::OPS);
        r.add(arith::OPS);
        r.add(scf::OPS);
        r.add(memref::OPS);
        r.add(func::OPS);
        r.add(llvm::OPS);
        r.add(crate::stencil::ops::OPS);
        r.add(crate::dmp::ops::OPS);
        r.add(crate::mpi::ops::OPS);
        r
    })
}

/// Whole-module rules that cannot be checked one op at a time.
pub(crate) fn module_checks(m: &Module) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    out.extend(crate::stencil::ops::check_store_overlap(m));
    out.extend(crate::dmp::ops::check_corner_accesses(m));
    out.extend(crate::mpi::ops::check_request_linearity(m));
    out
}

// ---- helpers shared by the verifiers ----

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}
pub(crate) use ensure;

pub(crate) fn counts(op: &Operation, operands: usize, results: usize) -> Result<(), String> {
    ensure!(op.operands.len() == operands, "expected {operands} operand(s), found {}", op.operands.len());
    ensure!(op.results.len() == results, "expected {results} result(s), found {}", op.results.len());
    ensure!(op.regions.is_empty(), "expected no regions");
    Ok(())
}

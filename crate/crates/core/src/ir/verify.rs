//! Structural verification. Collects every problem instead of stopping at the
//! first one.

use std::collections::HashSet;
use std::fmt;

use super::{Location, Module, Operation, Region, Type, ValueId};
use crate::dialects::{module_checks, registry};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: Option<Location>,
    /// Chain of enclosing ops, e.g. `func.func @step > stencil.apply > stencil.access`.
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(op: &Operation, path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { location: op.location, path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Some(loc) => write!(f, "{loc}: {}", self.message)?,
            None => f.write_str(&self.message)?,
        }
        if !self.path.is_empty() {
            write!(f, " [in {}]", self.path)?;
        }
        Ok(())
    }
}

/// What an op verifier can see besides the op itself.
pub struct VerifyCtx<'a> {
    pub module: &'a Module,
    /// Directly enclosing operation, `None` at module level.
    pub parent: Option<&'a Operation>,
    /// Nearest enclosing `func.func`.
    pub func: Option<&'a Operation>,
}

impl<'a> VerifyCtx<'a> {
    pub fn ty(&self, v: ValueId) -> &'a Type {
        self.module.value_type(v)
    }
}

pub fn verify_module(m: &Module) -> Result<(), Vec<Diagnostic>> {
    let mut v = Verifier { module: m, diags: Vec::new(), defined: HashSet::new(), visible: vec![HashSet::new()], path: Vec::new() };
    v.region(&m.body, None, None);
    v.diags.extend(module_checks(m));
    if v.diags.is_empty() {
        Ok(())
    } else {
        Err(v.diags)
    }
}

pub(crate) fn op_label(op: &Operation) -> String {
    match op.symbol_name() {
        Some(s) => format!("{} @{}", op.name, s),
        None => op.name.clone(),
    }
}

struct Verifier<'a> {
    module: &'a Module,
    diags: Vec<Diagnostic>,
    defined: HashSet<ValueId>,
    visible: Vec<HashSet<ValueId>>,
    path: Vec<String>,
}

impl<'a> Verifier<'a> {
    fn path_with(&self, op: &Operation) -> String {
        let mut p = self.path.clone();
        p.push(op_label(op));
        p.join(" > ")
    }

    fn report(&mut self, op: &Operation, message: String) {
        let path = self.path_with(op);
        self.diags.push(Diagnostic::new(op, path, message));
    }

    fn is_visible(&self, v: ValueId) -> bool {
        self.visible.iter().any(|s| s.contains(&v))
    }

    fn define(&mut self, v: ValueId, op: &Operation) {
        if v.index() >= self.module.values.len() {
            self.report(op, format!("value {} is not in the value table", v.0));
            return;
        }
        if !self.defined.insert(v) {
            self.report(op, format!("value %{} is defined more than once", v.0));
        }
        self.visible.last_mut().unwrap().insert(v);
    }

    fn region(&mut self, r: &'a Region, owner: Option<&'a Operation>, func: Option<&'a Operation>) {
        self.visible.push(HashSet::new());
        if let Some(o) = owner {
            for a in &r.args {
                self.define(*a, o);
            }
        }
        for op in &r.ops {
            self.op(op, owner, func);
        }
        self.visible.pop();
    }

    fn op(&mut self, op: &'a Operation, parent: Option<&'a Operation>, func: Option<&'a Operation>) {
        for (i, v) in op.operands.iter().enumerate() {
            if v.index() >= self.module.values.len() {
                self.report(op, format!("operand #{i} refers to a value outside the value table"));
            } else if !self.is_visible(*v) {
                let msg = if self.defined.contains(v) {
                    format!("operand #{i} uses a value that is not in scope here")
                } else {
                    format!("operand #{i}: use before definition")
                };
                self.report(op, msg);
            }
        }
        let value_table_ok = op.operands.iter().chain(&op.results).all(|v| v.index() < self.module.values.len());
        match registry().get(&op.name) {
            None => self.report(op, format!("unregistered operation '{}'", op.name)),
            Some(def) if value_table_ok => {
                let ctx = VerifyCtx { module: self.module, parent, func };
                if let Err(msg) = (def.verify)(op, &ctx) {
                    self.report(op, msg);
                }
            }
            Some(_) => {}
        }
        let inner_func = if op.name == "func.func" { Some(op) } else { func };
        self.path.push(op_label(op));
        for r in &op.regions {
            self.region(r, Some(op), inner_func);
        }
        self.path.pop();
        for r in &op.results {
            self.define(*r, op);
        }
    }
}

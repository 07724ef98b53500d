//! Deterministic text output. Values are renumbered `%0, %1, ...` in the
//! order they are defined while printing, so two prints of the same module
//! are byte-identical and value names never leak through.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use super::attributes::escape_string;
use super::{Attribute, Module, Operation, Region, Type, ValueId};
use crate::dialects::registry;

pub fn print_module(m: &Module) -> String {
    let mut p = Printer::new(m);
    p.out.push_str("builtin.module {\n");
    p.indent += 1;
    for op in &m.body.ops {
        p.op(op);
    }
    p.indent -= 1;
    p.out.push_str("}\n");
    p.out
}

/// Prints a single operation (and everything nested in it). Values defined
/// outside the op print as `%<outer.N>` placeholders.
pub fn print_op(m: &Module, op: &Operation) -> String {
    let mut p = Printer::new(m);
    p.op(op);
    p.out
}

pub struct Printer<'m> {
    module: &'m Module,
    out: String,
    names: HashMap<ValueId, usize>,
    next: usize,
    indent: usize,
}

impl<'m> Printer<'m> {
    fn new(module: &'m Module) -> Self {
        Printer { module, out: String::new(), names: HashMap::new(), next: 0, indent: 0 }
    }

    pub fn write(&mut self, s: &str) {
        self.out.push_str(s);
    }

    pub fn value_type(&self, v: ValueId) -> &'m Type {
        self.module.value_type(v)
    }

    /// Assigns the next canonical number to a newly defined value.
    pub fn define(&mut self, v: ValueId) {
        let n = self.next;
        self.next += 1;
        self.names.insert(v, n);
    }

    pub fn value(&mut self, v: ValueId) {
        match self.names.get(&v) {
            Some(n) => {
                let _ = write!(self.out, "%{n}");
            }
            None => {
                let _ = write!(self.out, "%outer.{}", v.0);
            }
        }
    }

    pub fn values(&mut self, vs: &[ValueId]) {
        for (i, v) in vs.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.value(*v);
        }
    }

    pub fn ty(&mut self, t: &Type) {
        let _ = write!(self.out, "{t}");
    }

    pub fn types(&mut self, ts: &[&Type]) {
        for (i, t) in ts.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.ty(t);
        }
    }

    pub fn attr(&mut self, a: &Attribute) {
        let _ = write!(self.out, "{a}");
    }

    /// Writes ` {k = v, ...}` for all attributes not in `skip`, if any remain.
    pub fn attr_dict(&mut self, attrs: &BTreeMap<String, Attribute>, skip: &[&str]) {
        let rest: Vec<_> = attrs.iter().filter(|(k, _)| !skip.contains(&k.as_str())).collect();
        if rest.is_empty() {
            return;
        }
        self.out.push_str(" {");
        for (i, (k, v)) in rest.into_iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            if k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') && !k.is_empty() && !k.starts_with(|c: char| c.is_ascii_digit()) {
                self.out.push_str(k);
            } else {
                self.out.push_str(&escape_string(k));
            }
            if *v != Attribute::Unit {
                self.out.push_str(" = ");
                self.attr(v);
            }
        }
        self.out.push('}');
    }

    /// Prints `{ ... }` with the region body. Region arguments must already
    /// have been defined by the caller when `header` is false.
    pub fn region(&mut self, r: &Region, header: bool) {
        self.out.push_str("{\n");
        self.indent += 1;
        if header && !r.args.is_empty() {
            self.pad();
            self.out.push_str("^bb0(");
            for (i, a) in r.args.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.define(*a);
                self.value(*a);
                self.out.push_str(": ");
                let t = self.value_type(*a);
                self.ty(t);
            }
            self.out.push_str("):\n");
        }
        for op in &r.ops {
            self.op(op);
        }
        self.indent -= 1;
        self.pad();
        self.out.push('}');
    }

    fn pad(&mut self) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
    }

    fn op(&mut self, op: &Operation) {
        self.pad();
        for r in &op.results {
            self.define(*r);
        }
        if !op.results.is_empty() {
            let results = op.results.clone();
            self.values(&results);
            self.out.push_str(" = ");
        }
        match registry().get(&op.name).and_then(|d| d.print) {
            Some(custom) => {
                self.out.push_str(&op.name);
                custom(self, op);
            }
            None => self.generic(op),
        }
        self.out.push('\n');
    }

    /// The generic form every op can be printed in.
    pub fn generic(&mut self, op: &Operation) {
        self.out.push_str(&escape_string(&op.name));
        self.generic_body(op);
    }

    /// Everything of the generic form after the op name.
    pub fn generic_body(&mut self, op: &Operation) {
        self.out.push('(');
        self.values(&op.operands);
        self.out.push(')');
        if !op.regions.is_empty() {
            self.out.push_str(" (");
            for (i, r) in op.regions.iter().enumerate() {
                if i > 0 {
                    self.out.push_str(", ");
                }
                self.region(r, true);
            }
            self.out.push(')');
        }
        self.attr_dict(&op.attributes, &[]);
        self.out.push_str(" : (");
        let ins: Vec<&Type> = op.operands.iter().map(|v| self.value_type(*v)).collect();
        self.types(&ins);
        self.out.push_str(") -> ");
        let outs: Vec<&Type> = op.results.iter().map(|v| self.value_type(*v)).collect();
        match outs.as_slice() {
            [single] if !matches!(single, Type::Function(_)) => self.ty(single),
            _ => {
                self.out.push('(');
                self.types(&outs);
                self.out.push(')');
            }
        }
    }
}

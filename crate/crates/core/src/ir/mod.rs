//! Generic SSA+regions data model.
//!
//! A [`Module`] owns a table of value types and a single top-level
//! [`Region`]. Operations own their nested regions directly, and every
//! region holds exactly one block of operations. Values are referred to by
//! [`ValueId`], an index into the module's [`ValueTable`].

pub(crate) mod attributes;
pub mod builder;
mod equality;
pub mod parser;
pub mod pass;
pub mod printer;
mod types;
pub mod verify;

use std::collections::BTreeMap;
use std::fmt;

pub use attributes::Attribute;
pub use builder::OpBuilder;
pub use equality::structurally_equal;
pub use parser::{parse_module, ParseError};
pub use printer::print_module;
pub use types::{FieldType, FunctionType, MemRefType, TempType, Type};
pub use verify::{verify_module, Diagnostic};

/// Handle to an SSA value. Unique within one [`Module`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

impl ValueId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Source position of an operation in the text it was parsed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Types of every value in a module, indexed by [`ValueId`].
#[derive(Clone, Debug, Default)]
pub struct ValueTable {
    types: Vec<Type>,
}

impl ValueTable {
    pub fn new_value(&mut self, ty: Type) -> ValueId {
        let id = ValueId(self.types.len() as u32);
        self.types.push(ty);
        id
    }

    pub fn ty(&self, v: ValueId) -> &Type {
        &self.types[v.index()]
    }

    pub fn set_type(&mut self, v: ValueId, ty: Type) {
        self.types[v.index()] = ty;
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// A single-block region: its arguments and its ordered operations.
#[derive(Clone, Debug, Default)]
pub struct Region {
    pub args: Vec<ValueId>,
    pub ops: Vec<Operation>,
}

impl Region {
    pub fn new(args: Vec<ValueId>, ops: Vec<Operation>) -> Self {
        Region { args, ops }
    }

    /// Pre-order walk over every operation in this region, nested ones included.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Operation)) {
        for op in &self.ops {
            op.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Operation)) {
        for op in &mut self.ops {
            op.walk_mut(f);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Operation {
    pub name: String,
    pub operands: Vec<ValueId>,
    pub results: Vec<ValueId>,
    pub attributes: BTreeMap<String, Attribute>,
    pub regions: Vec<Region>,
    pub location: Option<Location>,
}

impl Operation {
    pub fn new(name: impl Into<String>) -> Self {
        Operation {
            name: name.into(),
            operands: Vec::new(),
            results: Vec::new(),
            attributes: BTreeMap::new(),
            regions: Vec::new(),
            location: None,
        }
    }

    pub fn with_operands(mut self, operands: Vec<ValueId>) -> Self {
        self.operands = operands;
        self
    }

    pub fn with_results(mut self, results: Vec<ValueId>) -> Self {
        self.results = results;
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: Attribute) -> Self {
        self.attributes.insert(key.into(), value);
        self
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.regions.push(region);
        self
    }

    pub fn attr(&self, key: &str) -> Option<&Attribute> {
        self.attributes.get(key)
    }

    pub fn dialect(&self) -> &str {
        self.name.split('.').next().unwrap_or("")
    }

    pub fn result(&self, i: usize) -> ValueId {
        self.results[i]
    }

    /// Symbol name of a `func.func`, if this is one.
    pub fn symbol_name(&self) -> Option<&str> {
        match self.attr("sym_name") {
            Some(Attribute::String(s)) => Some(s),
            _ => None,
        }
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Operation)) {
        f(self);
        for r in &self.regions {
            r.walk(f);
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Operation)) {
        f(self);
        for r in &mut self.regions {
            r.walk_mut(f);
        }
    }

    pub fn describe(&self) -> String {
        match self.location {
            Some(loc) => format!("'{}' at {}", self.name, loc),
            None => format!("'{}'", self.name),
        }
    }
}

/// Program container: the value table plus the top-level region.
#[derive(Clone, Debug, Default)]
pub struct Module {
    pub values: ValueTable,
    pub body: Region,
}

impl Module {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value_type(&self, v: ValueId) -> &Type {
        self.values.ty(v)
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Operation)) {
        self.body.walk(f)
    }

    /// Top-level `func.func` operations, definitions and declarations alike.
    pub fn functions(&self) -> impl Iterator<Item = &Operation> {
        self.body.ops.iter().filter(|op| op.name == "func.func")
    }

    pub fn function(&self, name: &str) -> Option<&Operation> {
        self.functions().find(|f| f.symbol_name() == Some(name))
    }

    pub fn count_ops(&self, name: &str) -> usize {
        let mut n = 0;
        self.walk(&mut |op| {
            if op.name == name {
                n += 1;
            }
        });
        n
    }
}

/// Deep copy of `op` in which every value it defines (results and region
/// arguments, nested ones included) is replaced by a fresh value of the
/// same type. Uses of values defined outside `op` are kept.
pub fn clone_fresh(values: &mut ValueTable, op: &Operation) -> Operation {
    fn region(values: &mut ValueTable, r: &Region, map: &mut std::collections::HashMap<ValueId, ValueId>) -> Region {
        let args = r.args.iter().map(|a| fresh(values, *a, map)).collect();
        let ops = r.ops.iter().map(|o| operation(values, o, map)).collect();
        Region { args, ops }
    }
    fn fresh(values: &mut ValueTable, v: ValueId, map: &mut std::collections::HashMap<ValueId, ValueId>) -> ValueId {
        let n = values.new_value(values.ty(v).clone());
        map.insert(v, n);
        n
    }
    fn operation(values: &mut ValueTable, op: &Operation, map: &mut std::collections::HashMap<ValueId, ValueId>) -> Operation {
        let operands = op.operands.iter().map(|v| *map.get(v).unwrap_or(v)).collect();
        let regions = op.regions.iter().map(|r| region(values, r, map)).collect();
        let results = op.results.iter().map(|v| fresh(values, *v, map)).collect();
        Operation { name: op.name.clone(), operands, results, attributes: op.attributes.clone(), regions, location: op.location }
    }
    operation(values, op, &mut std::collections::HashMap::new())
}

//! Helper for passes that emit new operations.

use std::collections::BTreeMap;

use super::{Attribute, Operation, Region, Type, ValueId, ValueTable};

/// Collects operations into a block, allocating result values in the
/// module's value table as it goes.
pub struct OpBuilder<'v> {
    values: &'v mut ValueTable,
    ops: Vec<Operation>,
}

impl<'v> OpBuilder<'v> {
    pub fn new(values: &'v mut ValueTable) -> Self {
        OpBuilder { values, ops: Vec::new() }
    }

    /// A builder for a nested block sharing the same value table.
    pub fn nested(&mut self) -> OpBuilder<'_> {
        OpBuilder { values: &mut *self.values, ops: Vec::new() }
    }

    pub fn finish(self) -> Vec<Operation> {
        self.ops
    }

    pub fn new_value(&mut self, ty: Type) -> ValueId {
        self.values.new_value(ty)
    }

    pub fn value_type(&self, v: ValueId) -> &Type {
        self.values.ty(v)
    }

    pub fn push(&mut self, op: Operation) {
        self.ops.push(op);
    }

    pub fn create(
        &mut self,
        name: &str,
        operands: Vec<ValueId>,
        result_types: Vec<Type>,
        attributes: BTreeMap<String, Attribute>,
    ) -> Vec<ValueId> {
        let results: Vec<ValueId> = result_types.into_iter().map(|t| self.values.new_value(t)).collect();
        let mut op = Operation::new(name).with_operands(operands).with_results(results.clone());
        op.attributes = attributes;
        self.ops.push(op);
        results
    }

    /// Op with exactly one result.
    pub fn create1(&mut self, name: &str, operands: Vec<ValueId>, ty: Type) -> ValueId {
        self.create(name, operands, vec![ty], BTreeMap::new())[0]
    }

    pub fn create0(&mut self, name: &str, operands: Vec<ValueId>) {
        self.create(name, operands, Vec::new(), BTreeMap::new());
    }

    pub fn constant(&mut self, value: Attribute, ty: Type) -> ValueId {
        let r = self.values.new_value(ty);
        self.ops.push(Operation::new("arith.constant").with_results(vec![r]).with_attr("value", value));
        r
    }

    pub fn index(&mut self, v: i64) -> ValueId {
        self.constant(Attribute::index(v), Type::Index)
    }

    pub fn i32(&mut self, v: i64) -> ValueId {
        self.constant(Attribute::int(v, Type::I32), Type::I32)
    }

    pub fn i64(&mut self, v: i64) -> ValueId {
        self.constant(Attribute::i64(v), Type::I64)
    }

    pub fn float(&mut self, v: f64, ty: Type) -> ValueId {
        let v = if ty == Type::F32 { v as f32 as f64 } else { v };
        self.constant(Attribute::Float { value: v, ty: ty.clone() }, ty)
    }

    /// Binary arithmetic op whose result type equals the operand type.
    pub fn binary(&mut self, name: &str, a: ValueId, b: ValueId) -> ValueId {
        let ty = self.values.ty(a).clone();
        self.create1(name, vec![a, b], ty)
    }

    pub fn cmpi(&mut self, predicate: &str, a: ValueId, b: ValueId) -> ValueId {
        let r = self.values.new_value(Type::I1);
        self.ops.push(
            Operation::new("arith.cmpi")
                .with_operands(vec![a, b])
                .with_results(vec![r])
                .with_attr("predicate", Attribute::string(predicate)),
        );
        r
    }

    pub fn select(&mut self, cond: ValueId, a: ValueId, b: ValueId) -> ValueId {
        let ty = self.values.ty(a).clone();
        self.create1("arith.select", vec![cond, a, b], ty)
    }

    pub fn index_cast(&mut self, v: ValueId, ty: Type) -> ValueId {
        self.create1("arith.index_cast", vec![v], ty)
    }

    /// `scf.for` with loop-carried values. `body` receives the induction
    /// variable and the iteration arguments and returns the yielded values.
    pub fn for_loop(
        &mut self,
        lo: ValueId,
        hi: ValueId,
        step: ValueId,
        inits: Vec<ValueId>,
        body: impl FnOnce(&mut OpBuilder<'_>, ValueId, &[ValueId]) -> Vec<ValueId>,
    ) -> Vec<ValueId> {
        let iv = self.values.new_value(Type::Index);
        let iter_types: Vec<Type> = inits.iter().map(|v| self.values.ty(*v).clone()).collect();
        let iter_args: Vec<ValueId> = iter_types.iter().map(|t| self.values.new_value(t.clone())).collect();
        let mut inner = self.nested();
        let yielded = body(&mut inner, iv, &iter_args);
        inner.create0("scf.yield", yielded);
        let ops = inner.finish();
        let mut region_args = vec![iv];
        region_args.extend(iter_args);
        let results: Vec<ValueId> = iter_types.into_iter().map(|t| self.values.new_value(t)).collect();
        let mut operands = vec![lo, hi, step];
        operands.extend(inits);
        self.ops.push(
            Operation::new("scf.for")
                .with_operands(operands)
                .with_results(results.clone())
                .with_region(Region::new(region_args, ops)),
        );
        results
    }

    /// Perfect nest of `scf.for` loops over the half-open box `[lo, hi)`
    /// with unit step; the outermost loop iterates the first dimension.
    pub fn loop_nest(&mut self, lo: &[i64], hi: &[i64], body: &mut dyn FnMut(&mut OpBuilder<'_>, &[ValueId])) {
        let mut ivs = Vec::with_capacity(lo.len());
        self.loop_nest_rec(lo, hi, &mut ivs, body);
    }

    fn loop_nest_rec(
        &mut self,
        lo: &[i64],
        hi: &[i64],
        ivs: &mut Vec<ValueId>,
        body: &mut dyn FnMut(&mut OpBuilder<'_>, &[ValueId]),
    ) {
        let d = ivs.len();
        if d == lo.len() {
            body(self, ivs);
            return;
        }
        let l = self.index(lo[d]);
        let h = self.index(hi[d]);
        let s = self.index(1);
        self.for_loop(l, h, s, Vec::new(), |b, iv, _| {
            ivs.push(iv);
            b.loop_nest_rec(lo, hi, ivs, body);
            ivs.pop();
            Vec::new()
        });
    }

    pub fn if_then(&mut self, cond: ValueId, body: impl FnOnce(&mut OpBuilder<'_>)) {
        let mut inner = self.nested();
        body(&mut inner);
        inner.create0("scf.yield", Vec::new());
        let ops = inner.finish();
        self.ops.push(Operation::new("scf.if").with_operands(vec![cond]).with_region(Region::new(Vec::new(), ops)));
    }
}

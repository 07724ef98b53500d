use std::collections::HashMap;

use super::{Module, Operation, Region, ValueId};

/// Structural equality up to value renaming: same operations in the same
/// order, same attributes, same types, and a consistent one-to-one mapping
/// between the values of both modules.
pub fn structurally_equal(a: &Module, b: &Module) -> bool {
    let mut eq = Matcher { a, b, fwd: HashMap::new(), bwd: HashMap::new() };
    eq.region(&a.body, &b.body)
}

struct Matcher<'m> {
    a: &'m Module,
    b: &'m Module,
    fwd: HashMap<ValueId, ValueId>,
    bwd: HashMap<ValueId, ValueId>,
}

impl Matcher<'_> {
    fn bind(&mut self, x: ValueId, y: ValueId) -> bool {
        if self.a.value_type(x) != self.b.value_type(y) {
            return false;
        }
        match (self.fwd.get(&x), self.bwd.get(&y)) {
            (None, None) => {
                self.fwd.insert(x, y);
                self.bwd.insert(y, x);
                true
            }
            (Some(&fy), Some(&bx)) => fy == y && bx == x,
            _ => false,
        }
    }

    fn uses(&self, x: ValueId, y: ValueId) -> bool {
        self.fwd.get(&x) == Some(&y)
    }

    fn region(&mut self, ra: &Region, rb: &Region) -> bool {
        if ra.args.len() != rb.args.len() || ra.ops.len() != rb.ops.len() {
            return false;
        }
        for (x, y) in ra.args.iter().zip(&rb.args) {
            if !self.bind(*x, *y) {
                return false;
            }
        }
        ra.ops.iter().zip(&rb.ops).all(|(x, y)| self.op(x, y))
    }

    fn op(&mut self, x: &Operation, y: &Operation) -> bool {
        if x.name != y.name
            || x.attributes != y.attributes
            || x.operands.len() != y.operands.len()
            || x.results.len() != y.results.len()
            || x.regions.len() != y.regions.len()
        {
            return false;
        }
        if !x.operands.iter().zip(&y.operands).all(|(p, q)| self.uses(*p, *q)) {
            return false;
        }
        if !x.results.iter().zip(&y.results).all(|(p, q)| self.bind(*p, *q)) {
            return false;
        }
        x.regions.iter().zip(&y.regions).all(|(p, q)| self.region(p, q))
    }
}

//! Removal of halo swaps whose buffer has not been written since an
//! identical swap of the same buffer.
//!
//! The analysis is local to each block. A buffer is "clean" after a swap
//! until something may write it: a store to the buffer (through any cast
//! alias), an unknown op taking it as an operand, or any op with regions
//! other than `stencil.apply`, whose bodies are side-effect free. Since all
//! ranks run the same program, a buffer that no rank wrote still has
//! up-to-date halos everywhere.

use std::collections::HashMap;

use crate::ir::{Attribute, Module, Operation, Region, ValueId};

/// Returns the number of swaps removed.
pub fn eliminate_redundant_swaps(m: &mut Module) -> usize {
    let mut removed = 0;
    for op in m.body.ops.iter_mut() {
        for r in op.regions.iter_mut() {
            removed += block(r);
        }
    }
    removed
}

type SwapKey = (Option<Attribute>, Option<Attribute>);

fn block(r: &mut Region) -> usize {
    let mut removed = 0;
    let mut alias: HashMap<ValueId, ValueId> = HashMap::new();
    let mut clean: HashMap<ValueId, SwapKey> = HashMap::new();
    let root = |alias: &HashMap<ValueId, ValueId>, mut v: ValueId| {
        while let Some(&p) = alias.get(&v) {
            v = p;
        }
        v
    };
    let ops = std::mem::take(&mut r.ops);
    for mut op in ops {
        for sub in op.regions.iter_mut() {
            removed += block(sub);
        }
        match op.name.as_str() {
            "dmp.swap" => {
                let v = root(&alias, op.operands[0]);
                let key = (op.attr("grid").cloned(), op.attr("swaps").cloned());
                if clean.get(&v) == Some(&key) {
                    removed += 1;
                    continue;
                }
                clean.insert(v, key);
            }
            "builtin.unrealized_conversion_cast" => {
                alias.insert(op.results[0], op.operands[0]);
            }
            "stencil.load" | "memref.load" | "stencil.apply" | "memref.extract_aligned_pointer_as_index" => {}
            "stencil.store" | "memref.store" => {
                clean.remove(&root(&alias, op.operands[1]));
            }
            _ if !op.regions.is_empty() || is_opaque(&op) => clean.clear(),
            _ => {
                for v in &op.operands {
                    clean.remove(&root(&alias, *v));
                }
            }
        }
        r.ops.push(op);
    }
    removed
}

/// Ops that may write memory they were not handed directly.
fn is_opaque(op: &Operation) -> bool {
    op.name == "func.call" || op.dialect() == "mpi"
}

//! Benchmark kernels: heat diffusion, the isotropic acoustic wave equation
//! and a plain copy, as star stencils of any space discretization order.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xstencil_core::ir::parser::parse_module;
use xstencil_core::ir::{Attribute, Module, Type};
use xstencil_core::stencil::Bounds;

use crate::data::{Elem, FieldData};
use crate::ExecError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Heat,
    Wave,
    Copy,
}

impl KernelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "heat" => Some(Self::Heat),
            "wave" | "acoustic-wave" => Some(Self::Wave),
            "copy" => Some(Self::Copy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Heat => "heat",
            Self::Wave => "wave",
            Self::Copy => "copy",
        }
    }

    /// Time slots the kernel rotates through.
    pub fn slots(self) -> usize {
        match self {
            Self::Wave => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelPreset {
    pub kind: KernelKind,
    /// Core extent per dimension; its length is the rank (1–3).
    pub shape: Vec<i64>,
    /// Space discretization order: 2, 4 or 8.
    pub sdo: u32,
    pub timesteps: u64,
    pub elem: Elem,
    /// Grid spacing.
    pub h: f64,
    pub dt: f64,
    /// Diffusivity (heat) or wave speed (wave).
    pub coefficient: f64,
}

impl KernelPreset {
    pub fn new(kind: KernelKind, shape: Vec<i64>, sdo: u32) -> Self {
        let (dt, coefficient) = match kind {
            KernelKind::Wave => (0.2, 1.0),
            _ => (0.05, 1.0),
        };
        KernelPreset { kind, shape, sdo, timesteps: 1, elem: Elem::F64, h: 1.0, dt, coefficient }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn radius(&self) -> i64 {
        i64::from(self.sdo / 2)
    }

    /// The updated points.
    pub fn core(&self) -> Bounds {
        Bounds::from_shape(&self.shape)
    }

    /// Core plus a halo of the stencil radius on every side.
    pub fn field_bounds(&self) -> Bounds {
        let r = self.radius();
        Bounds::new(vec![-r; self.rank()], self.shape.iter().map(|n| n + r).collect())
    }

    /// Distinct points read from the current time level.
    pub fn footprint_points(&self) -> usize {
        match self.kind {
            KernelKind::Copy => 1,
            _ => 1 + 2 * self.radius() as usize * self.rank(),
        }
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        let bad = |m: String| Err(ExecError::Input(m));
        if !(1..=3).contains(&self.rank()) {
            return bad(format!("kernels have 1 to 3 dimensions, not {}", self.rank()));
        }
        if self.shape.iter().any(|&n| n < 1) {
            return bad(format!("invalid shape {:?}", self.shape));
        }
        if !matches!(self.sdo, 2 | 4 | 8) {
            return bad(format!("space discretization order must be 2, 4 or 8, not {}", self.sdo));
        }
        if !matches!(self.elem, Elem::F32 | Elem::F64) {
            return bad("kernels compute in f32 or f64".into());
        }
        Ok(())
    }
}

/// Central-difference weights of the second derivative at offsets
/// `0, 1, ..., sdo/2` (symmetric).
pub fn second_derivative_weights(sdo: u32) -> Vec<f64> {
    match sdo {
        2 => vec![-2.0, 1.0],
        4 => vec![-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        6 => vec![-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0],
        8 => vec![-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0],
        _ => panic!("no central difference of order {sdo}"),
    }
}

#[derive(Clone, Debug)]
pub struct Kernel {
    pub preset: KernelPreset,
    pub module: Module,
    pub text: String,
}

impl Kernel {
    /// Initial data for every field argument: seeded uniform values in
    /// [0, 1) over the whole field (halo included), identical in every time
    /// slot so the fixed boundary is consistent.
    pub fn init(&self, seed: u64) -> Vec<FieldData> {
        let p = &self.preset;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = FieldData::from_fn("u", p.field_bounds(), p.elem, |_| rng.gen::<f64>());
        let names: &[&str] = match p.kind {
            KernelKind::Wave => &["u", "u_prev", "u_next"],
            _ => &["u", "u_next"],
        };
        names
            .iter()
            .map(|n| {
                let mut f = first.clone();
                f.name = n.to_string();
                f
            })
            .collect()
    }
}

pub fn generate_kernel(preset: &KernelPreset) -> Result<Kernel, ExecError> {
    preset.validate()?;
    let text = kernel_text(preset);
    let module = parse_module(&text).map_err(|e| ExecError::Input(format!("generated kernel does not parse: {e}")))?;
    Ok(Kernel { preset: preset.clone(), module, text })
}

fn float(v: f64, elem: Elem) -> String {
    let ty = elem.ty();
    let v = if ty == Type::F32 { f64::from(v as f32) } else { v };
    Attribute::Float { value: v, ty }.to_string()
}

/// Emits SSA text; `next` hands out fresh value names.
struct Emitter {
    out: String,
    n: usize,
    elem: String,
}

impl Emitter {
    fn fresh(&mut self) -> String {
        self.n += 1;
        format!("%v{}", self.n)
    }

    fn line(&mut self, indent: usize, s: &str) {
        let _ = writeln!(self.out, "{}{s}", "  ".repeat(indent));
    }

    fn bin(&mut self, op: &str, a: &str, b: &str) -> String {
        let r = self.fresh();
        let elem = self.elem.clone();
        self.line(3, &format!("{r} = arith.{op} {a}, {b} : {elem}"));
        r
    }
}

fn kernel_text(p: &KernelPreset) -> String {
    let rank = p.rank();
    let r = p.radius();
    let elem = match p.elem {
        Elem::F32 => "f32",
        _ => "f64",
    };
    let fb = p.field_bounds();
    let dims = |b: &[i64], e: &[i64]| b.iter().zip(e).map(|(l, u)| format!("[{l},{u}]")).collect::<Vec<_>>().join("x");
    let field = format!("!field<{}x{elem}>", dims(&fb.lb, &fb.ub));
    let temp = format!("!temp<{}{elem}>", "?x".repeat(rank));
    let list = |v: &[i64]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let slots = p.kind.slots();
    let names: Vec<&str> = match p.kind {
        KernelKind::Wave => vec!["u", "u_prev", "u_next", "nt"],
        _ => vec!["u", "u_next", "nt"],
    };
    let fields = vec![field.as_str(); slots].join(", ");
    let mut e = Emitter { out: String::new(), n: 0, elem: elem.into() };

    let args: Vec<String> = (0..slots).map(|i| format!("%s{i} : {field}")).collect();
    let arg_names = names.iter().map(|n| format!("\"{n}\"")).collect::<Vec<_>>().join(", ");
    e.line(
        0,
        &format!("func.func @{}({}, %nt : index) -> ({fields}) attributes {{arg_names = [{arg_names}]}} {{", p.kind.name(), args.join(", ")),
    );
    e.line(1, "%c0 = arith.constant 0 : index");
    e.line(1, "%c1 = arith.constant 1 : index");
    let results: Vec<String> = (0..slots).map(|i| format!("%r{i}")).collect();
    let iters: Vec<String> = (0..slots).map(|i| format!("%a{i} = %s{i}")).collect();
    e.line(1, &format!("{} = scf.for %t = %c0 to %nt step %c1 iter_args({}) -> ({fields}) {{", results.join(", "), iters.join(", ")));

    // Loads of the time levels read by the update.
    e.line(2, &format!("%x = stencil.load %a0 : {field} -> {temp}"));
    let wave = p.kind == KernelKind::Wave;
    if wave {
        e.line(2, &format!("%y = stencil.load %a1 : {field} -> {temp}"));
        e.line(2, &format!("%new = stencil.apply(%xa = %x : {temp}, %ya = %y : {temp}) -> {temp} {{"));
    } else {
        e.line(2, &format!("%new = stencil.apply(%xa = %x : {temp}) -> {temp} {{"));
    }
    let access = |e: &mut Emitter, arg: &str, off: &[i64]| {
        let v = e.fresh();
        e.line(3, &format!("{v} = stencil.access {arg}[{}] : {temp}", off.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")));
        v
    };
    let zero = vec![0i64; rank];
    let centre = access(&mut e, "%xa", &zero);
    let result = match p.kind {
        KernelKind::Copy => centre,
        KernelKind::Heat | KernelKind::Wave => {
            let w = second_derivative_weights(p.sdo);
            let w0 = e.fresh();
            e.line(3, &format!("{w0} = arith.constant {}", float(w[0] * rank as f64, p.elem)));
            let mut acc = e.bin("mulf", &centre, &w0);
            for d in 0..rank {
                for k in 1..=r {
                    let mut lo = zero.clone();
                    lo[d] = -k;
                    let mut hi = zero.clone();
                    hi[d] = k;
                    let a = access(&mut e, "%xa", &lo);
                    let b = access(&mut e, "%xa", &hi);
                    let pair = e.bin("addf", &a, &b);
                    let wk = e.fresh();
                    e.line(3, &format!("{wk} = arith.constant {}", float(w[k as usize], p.elem)));
                    let term = e.bin("mulf", &pair, &wk);
                    acc = e.bin("addf", &acc, &term);
                }
            }
            let factor = match p.kind {
                KernelKind::Heat => p.coefficient * p.dt / (p.h * p.h),
                _ => p.coefficient * p.coefficient * p.dt * p.dt / (p.h * p.h),
            };
            let f = e.fresh();
            e.line(3, &format!("{f} = arith.constant {}", float(factor, p.elem)));
            let scaled = e.bin("mulf", &acc, &f);
            if wave {
                let prev = access(&mut e, "%ya", &zero);
                let two = e.fresh();
                e.line(3, &format!("{two} = arith.constant {}", float(2.0, p.elem)));
                let twice = e.bin("mulf", &centre, &two);
                let diff = e.bin("subf", &twice, &prev);
                e.bin("addf", &diff, &scaled)
            } else {
                e.bin("addf", &centre, &scaled)
            }
        }
    };
    e.line(3, &format!("stencil.return {result} : {elem}"));
    e.line(2, "}");
    let target = if wave { "%a2" } else { "%a1" };
    e.line(2, &format!("stencil.store %new to {target} (<[{}], [{}]>) : {temp} to {field}", list(&zero), list(&p.shape)));
    // Rotate: the new level becomes slot 0, every other level moves down.
    let rotated: Vec<String> = match p.kind {
        KernelKind::Wave => vec!["%a2".into(), "%a0".into(), "%a1".into()],
        _ => vec!["%a1".into(), "%a0".into()],
    };
    e.line(2, &format!("scf.yield {} : {fields}", rotated.join(", ")));
    e.line(1, "}");
    e.line(1, &format!("func.return {} : {fields}", results.join(", ")));
    e.line(0, "}");
    e.out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_zero() {
        for sdo in [2, 4, 6, 8] {
            let w = second_derivative_weights(sdo);
            let s = w[0] + 2.0 * w[1..].iter().sum::<f64>();
            assert!(s.abs() < 1e-12, "sdo {sdo}: {s}");
        }
    }

    #[test]
    fn rejects_bad_presets() {
        assert!(generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![8, 8], 3)).is_err());
        assert!(generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![], 2)).is_err());
        assert!(generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![2, 2, 2, 2], 2)).is_err());
        assert!(generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![0, 4], 2)).is_err());
    }
}

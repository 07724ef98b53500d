mod common;

use common::{parse, pipeline};
use xstencil_core::stencil::Bounds;
use xstencil_exec::{generate_kernel, run_loops, run_serial_stencil, Elem, ExecError, FieldData, KernelKind, KernelPreset, Scalar};

const JACOBI: &str = include_str!("../../core/tests/fixtures/listing1.xir");

fn jacobi_init() -> Vec<FieldData> {
    vec![
        FieldData::from_fn("in", Bounds::new(vec![-1], vec![129]), Elem::F64, |p| p[0] as f64),
        FieldData::zeros("out", Bounds::new(vec![0], vec![128]), Elem::F64),
    ]
}

#[test]
fn jacobi_sums_three_neighbours() {
    let m = pipeline(&parse(JACOBI), "propagate-bounds");
    let out = run_serial_stencil(&m, &jacobi_init(), 1).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[1].bounds, Bounds::new(vec![0], vec![128]));
    for i in 0..128 {
        assert_eq!(out[1].get(&[i]), Some(Scalar::F64(3.0 * i as f64)), "point {i}");
    }
}

#[test]
fn zero_timesteps_return_init() {
    let m = pipeline(&parse(JACOBI), "propagate-bounds");
    let init = jacobi_init();
    let out = run_serial_stencil(&m, &init, 0).unwrap();
    for (a, b) in out.iter().zip(&init) {
        assert!(a.data.bitwise_eq(&b.data));
    }
    let k = generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![16, 16], 4)).unwrap();
    let m = pipeline(&k.module, "propagate-bounds");
    let init = k.init(3);
    let out = run_serial_stencil(&m, &init, 0).unwrap();
    for (a, b) in out.iter().zip(&init) {
        assert!(a.data.bitwise_eq(&b.data));
    }
}

#[test]
fn copy_kernel_is_a_fixpoint() {
    for (shape, t) in [(vec![40], 5), (vec![12, 9], 4), (vec![6, 5, 4], 3)] {
        let k = generate_kernel(&KernelPreset::new(KernelKind::Copy, shape, 2)).unwrap();
        let m = pipeline(&k.module, "propagate-bounds");
        let init = k.init(11);
        let out = run_serial_stencil(&m, &init, t).unwrap();
        let core = k.preset.core();
        for f in &out {
            assert!(f.bitwise_eq_on(&init[0], &core), "{}", f.name);
        }
    }
}

/// Independent oracle: the heat update written directly over arrays.
fn heat_oracle(p: &KernelPreset, init: &FieldData, steps: u64) -> Vec<f64> {
    let (nx, ny) = (p.shape[0], p.shape[1]);
    let r = p.radius();
    let w = xstencil_exec::kernels::second_derivative_weights(p.sdo);
    let factor = p.coefficient * p.dt / (p.h * p.h);
    let width = ny + 2 * r;
    let idx = |i: i64, j: i64| ((i + r) * width + (j + r)) as usize;
    let mut a: Vec<f64> = (0..init.data.len()).map(|i| init.data.get(i).as_f64()).collect();
    let mut b = a.clone();
    for _ in 0..steps {
        for i in 0..nx {
            for j in 0..ny {
                let c = a[idx(i, j)];
                let mut acc = c * (w[0] * 2.0);
                for k in 1..=r {
                    acc += (a[idx(i - k, j)] + a[idx(i + k, j)]) * w[k as usize];
                }
                for k in 1..=r {
                    acc += (a[idx(i, j - k)] + a[idx(i, j + k)]) * w[k as usize];
                }
                b[idx(i, j)] = c + acc * factor;
            }
        }
        std::mem::swap(&mut a, &mut b);
    }
    a
}

#[test]
fn heat_matches_direct_oracle() {
    for sdo in [2, 4, 8] {
        let p = KernelPreset::new(KernelKind::Heat, vec![20, 17], sdo);
        let k = generate_kernel(&p).unwrap();
        let m = pipeline(&k.module, "propagate-bounds");
        let init = k.init(5);
        for steps in [1, 2, 5] {
            let out = run_serial_stencil(&m, &init, steps).unwrap();
            let want = heat_oracle(&p, &init[0], steps);
            let core = p.core();
            for pt in core.points() {
                let i = init[0].bounds.linear_index(&pt);
                let got = out[0].get(&pt).unwrap().as_f64();
                assert!((got - want[i]).abs() <= 1e-12 * want[i].abs().max(1.0), "sdo {sdo} T {steps} at {pt:?}: {got} vs {}", want[i]);
            }
        }
    }
}

#[test]
fn loops_match_serial_bitwise() {
    let m = pipeline(&parse(JACOBI), "propagate-bounds");
    let loops = pipeline(&m, "lower-stencil-to-loops");
    let a = run_serial_stencil(&m, &jacobi_init(), 1).unwrap();
    let b = run_loops(&loops, &jacobi_init(), 1).unwrap();
    common::assert_core_equal(&a, &b, &Bounds::new(vec![0], vec![128]));

    for (kind, shape, sdo, t) in [
        (KernelKind::Heat, vec![24], 8, 4),
        (KernelKind::Heat, vec![16, 12], 4, 3),
        (KernelKind::Wave, vec![8, 7, 6], 2, 3),
        (KernelKind::Wave, vec![10, 9], 8, 2),
    ] {
        let k = generate_kernel(&KernelPreset::new(kind, shape, sdo)).unwrap();
        let m = pipeline(&k.module, "propagate-bounds");
        let loops = pipeline(&m, "lower-stencil-to-loops");
        let init = k.init(9);
        let a = run_serial_stencil(&m, &init, t).unwrap();
        let b = run_loops(&loops, &init, t).unwrap();
        common::assert_core_equal(&a, &b, &k.preset.field_bounds());
    }
}

#[test]
fn loops_refuse_stencil_ops() {
    let m = pipeline(&parse(JACOBI), "propagate-bounds");
    assert!(matches!(run_loops(&m, &jacobi_init(), 1), Err(ExecError::Input(_))));
}

#[test]
fn empty_function_gives_empty_output() {
    let m = parse("func.func @nothing() {\n  func.return\n}\n");
    assert!(run_loops(&m, &[], 1).unwrap().is_empty());
}

#[test]
fn out_of_bounds_load_traps() {
    let m = parse(
        "func.func @oob(%a : memref<4xf64>) {\n  %c = arith.constant 7 : index\n  %v = memref.load %a[%c] : memref<4xf64>\n  func.return\n}\n",
    );
    let init = [FieldData::zeros("a", Bounds::from_shape(&[4]), Elem::F64)];
    match run_loops(&m, &init, 1) {
        Err(ExecError::Trap { op, message }) => {
            assert!(op.contains("memref.load"), "{op}");
            assert!(message.contains('7'), "{message}");
        }
        other => panic!("expected a trap, got {other:?}"),
    }
}

#[test]
fn mismatched_init_is_rejected() {
    let m = pipeline(&parse(JACOBI), "propagate-bounds");
    let mut init = jacobi_init();
    init[0] = FieldData::zeros("in", Bounds::new(vec![0], vec![128]), Elem::F64);
    assert!(matches!(run_serial_stencil(&m, &init, 1), Err(ExecError::Input(_))));
    assert!(matches!(run_serial_stencil(&m, &init[..1], 1), Err(ExecError::Input(_))));
}

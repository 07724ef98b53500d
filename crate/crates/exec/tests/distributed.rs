mod common;

use common::{assert_core_equal, lowered, parse, pipeline};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xstencil_core::dmp::GridTopology;
use xstencil_core::stencil::Bounds;
use xstencil_exec::{
    gather_into, generate_kernel, run_serial_stencil, scatter, simulate_distributed, Elem, ExecError, FieldData, KernelKind, KernelPreset, Level,
    Schedule, SimOptions,
};

const LEVELS: [Level; 3] = [Level::Dmp, Level::Mpi, Level::Func];

fn grid(s: &str) -> GridTopology {
    GridTopology::parse(s).unwrap()
}

/// Every level on `topo` matches the serial interpreter bitwise on the core.
fn check_kernel(kind: KernelKind, shape: Vec<i64>, sdo: u32, t: u64, topo: &str) {
    let k = generate_kernel(&KernelPreset::new(kind, shape, sdo)).unwrap();
    let serial = run_serial_stencil(&pipeline(&k.module, "propagate-bounds"), &k.init(7), t).unwrap();
    let topo = grid(topo);
    for level in LEVELS {
        let m = lowered(&k.module, &topo, level);
        let dist = simulate_distributed(&m, &topo, &k.init(7), t, level, &SimOptions::default())
            .unwrap_or_else(|e| panic!("{kind:?} sdo {sdo} on {topo} at {level:?}: {e}"));
        assert_core_equal(&serial, &dist.outputs, &k.preset.core());
    }
}

#[test]
fn heat_2d_on_2x2_matches_serial() {
    check_kernel(KernelKind::Heat, vec![64, 64], 2, 16, "2x2");
}

#[test]
fn identity_decomposition_matches_serial() {
    for (kind, shape, sdo, topo) in [
        (KernelKind::Heat, vec![32], 4, "1"),
        (KernelKind::Heat, vec![16, 16], 8, "1x1"),
        (KernelKind::Wave, vec![8, 8, 8], 2, "1x1x1"),
        (KernelKind::Copy, vec![12, 10], 2, "1x1"),
    ] {
        check_kernel(kind, shape, sdo, 3, topo);
    }
}

#[test]
fn one_to_three_dimensional_grids_match_serial() {
    for (kind, shape, sdo, topo) in [
        (KernelKind::Heat, vec![64], 8, "8"),
        (KernelKind::Wave, vec![48], 4, "4"),
        (KernelKind::Heat, vec![16, 24], 4, "2x4"),
        (KernelKind::Wave, vec![16, 16], 8, "4x1"),
        (KernelKind::Heat, vec![16, 16, 8], 2, "2"),
        (KernelKind::Heat, vec![12, 12, 12], 4, "2x2x2"),
        (KernelKind::Wave, vec![8, 8, 8], 2, "1x2x4"),
    ] {
        check_kernel(kind, shape, sdo, 4, topo);
    }
}

#[test]
fn jacobi_listing_matches_serial() {
    let m = parse(include_str!("../../core/tests/fixtures/listing1.xir"));
    let init = vec![
        FieldData::from_fn("in", Bounds::new(vec![-1], vec![129]), Elem::F64, |p| p[0] as f64),
        FieldData::zeros("out", Bounds::new(vec![0], vec![128]), Elem::F64),
    ];
    let serial = run_serial_stencil(&pipeline(&m, "propagate-bounds"), &init, 1).unwrap();
    for topo in ["1", "2", "4", "8"] {
        let topo = grid(topo);
        for level in LEVELS {
            let d = lowered(&m, &topo, level);
            let out = simulate_distributed(&d, &topo, &init, 1, level, &SimOptions::default()).unwrap();
            assert_core_equal(&serial[1..], &out.outputs[1..], &Bounds::new(vec![0], vec![128]));
        }
    }
}

#[test]
fn results_do_not_depend_on_scheduling() {
    let k = generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![16, 16], 4)).unwrap();
    let topo = grid("2x4");
    for level in LEVELS {
        let m = lowered(&k.module, &topo, level);
        let base = simulate_distributed(&m, &topo, &k.init(1), 5, level, &SimOptions::default()).unwrap();
        for seed in [1, 2, 3, 42, 1234, 99999] {
            let opts = SimOptions { schedule: Schedule::Seeded(seed), ..SimOptions::default() };
            let r = simulate_distributed(&m, &topo, &k.init(1), 5, level, &opts).unwrap();
            assert_core_equal(&base.outputs, &r.outputs, &k.preset.field_bounds());
            assert_eq!(base.stats, r.stats);
            assert_eq!(base.messages, r.messages);
        }
    }
}

#[test]
fn levels_count_the_same_traffic() {
    let k = generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![16, 16], 2)).unwrap();
    let topo = grid("2x2");
    let runs: Vec<_> = LEVELS
        .iter()
        .map(|&l| simulate_distributed(&lowered(&k.module, &topo, l), &topo, &k.init(2), 3, l, &SimOptions::default()).unwrap())
        .collect();
    // Four ranks, two neighbours each, one swap per step.
    assert_eq!(runs[0].messages, 4 * 2 * 3);
    for r in &runs[1..] {
        assert_eq!(r.messages, runs[0].messages);
        assert_eq!(r.elements_sent, runs[0].elements_sent);
    }
    assert_eq!(runs[0].elements_sent, 4 * 2 * 3 * 8);
    assert_eq!(runs[0].stats.get("dmp.swap"), 4 * 3);
    assert_eq!(runs[1].stats.get("mpi.isend"), 4 * 4 * 3);
    assert_eq!(runs[2].stats.get("func.call @MPI_Isend"), 4 * 4 * 3);
}

const DEADLOCK: &str = r#"builtin.module {
  func.func @stuck(%0: !field<[0,4]xf64>) attributes {dmp.domain = #stencil.bounds<[0], [8]>, dmp.grid = #dmp.grid<2>, dmp.reference = @stuck_serial} {
    %1 = mpi.comm_rank() : () -> i32
    %2 = arith.constant 1 : i32
    %3 = arith.subi %2, %1 : i32
    %4 = arith.constant 7 : i32
    %5 = memref.alloc() : memref<1xf64>
    %6, %7, %8 = mpi.unwrap_memref(%5) : (memref<1xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    mpi.recv(%6, %7, %8, %3, %4) : (!llvm.ptr, i32, !mpi.datatype, i32, i32) -> ()
    func.return
  }
  func.func @stuck_serial(%0: !field<[0,8]xf64>) attributes {dmp.serial_reference} {
    func.return
  }
}
"#;

#[test]
fn unmatched_receive_is_reported_as_deadlock() {
    let m = parse(DEADLOCK);
    let init = [FieldData::zeros("u", Bounds::new(vec![0], vec![8]), Elem::F64)];
    for schedule in [Schedule::RoundRobin, Schedule::Seeded(5)] {
        let opts = SimOptions { schedule, ..SimOptions::default() };
        match simulate_distributed(&m, &grid("2"), &init, 1, Level::Mpi, &opts) {
            Err(ExecError::Deadlock { blocked }) => {
                assert_eq!(blocked.len(), 2);
                for (r, b) in blocked.iter().enumerate() {
                    assert_eq!(b.rank, r);
                    assert!(b.waiting_in.contains("mpi.recv"), "{}", b.waiting_in);
                }
            }
            other => panic!("expected a deadlock, got {other:?}"),
        }
    }
}

#[test]
fn wrong_level_and_grid_are_rejected() {
    let k = generate_kernel(&KernelPreset::new(KernelKind::Heat, vec![8, 8], 2)).unwrap();
    let m = lowered(&k.module, &grid("2x2"), Level::Mpi);
    let opts = SimOptions::default();
    assert!(matches!(simulate_distributed(&m, &grid("2x2"), &k.init(0), 1, Level::Dmp, &opts), Err(ExecError::Input(_))));
    assert!(matches!(simulate_distributed(&m, &grid("4"), &k.init(0), 1, Level::Mpi, &opts), Err(ExecError::Input(_))));
    let serial = pipeline(&k.module, "propagate-bounds");
    assert!(matches!(simulate_distributed(&serial, &grid("1x1"), &k.init(0), 1, Level::Dmp, &opts), Err(ExecError::Input(_))));
}

#[test]
fn gather_inverts_scatter() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let rank = rng.gen_range(1..=3);
        let dims: Vec<usize> = (0..rng.gen_range(1..=rank)).map(|_| rng.gen_range(1..=3)).collect();
        let topo = GridTopology::new(dims.clone()).unwrap();
        let lb: Vec<i64> = (0..rank).map(|_| rng.gen_range(-3..3)).collect();
        let ub: Vec<i64> = lb.iter().enumerate().map(|(d, l)| l + dims.get(d).copied().unwrap_or(1) as i64 * rng.gen_range(1..5)).collect();
        let g = FieldData::from_fn("g", Bounds::new(lb.clone(), ub.clone()), Elem::F64, |_| rng.gen());
        let halo: Vec<i64> = (0..rank).map(|_| rng.gen_range(0..3)).collect();
        let mut back = FieldData::zeros("g", g.bounds.clone(), Elem::F64);
        for r in 0..topo.num_ranks() {
            let coord = topo.coord_of(r);
            // Block of the global field owned by `coord`, with a halo.
            let mut core_lb = lb.clone();
            let mut core_ub = ub.clone();
            for d in 0..dims.len() {
                let n = (ub[d] - lb[d]) / dims[d] as i64;
                core_lb[d] = lb[d] + n * coord[d] as i64;
                core_ub[d] = core_lb[d] + n;
            }
            let local = Bounds::new(
                core_lb.iter().zip(&core_ub).enumerate().map(|(d, (l, _))| if d < dims.len() { -halo[d] } else { *l }).collect(),
                core_lb.iter().zip(&core_ub).enumerate().map(|(d, (l, u))| if d < dims.len() { u - l + halo[d] } else { *u }).collect(),
            );
            let shift: Vec<i64> = (0..rank).map(|d| if d < dims.len() { core_lb[d] } else { 0 }).collect();
            let data = scatter(&g, &local, &shift).unwrap();
            gather_into(&mut back, &data, &local, &shift, &Bounds::new(core_lb, core_ub)).unwrap();
        }
        assert!(back.data.bitwise_eq(&g.data));
    }
}

#[test]
fn scatter_zero_fills_outside_the_field() {
    let g = FieldData::from_fn("g", Bounds::new(vec![0], vec![4]), Elem::F64, |p| p[0] as f64 + 1.0);
    let d = scatter(&g, &Bounds::new(vec![-2], vec![3]), &[2]).unwrap();
    let vals: Vec<f64> = (0..d.len()).map(|i| d.get(i).as_f64()).collect();
    assert_eq!(vals, [1.0, 2.0, 3.0, 4.0, 0.0]);
}

#[test]
fn swap_elimination_preserves_results() {
    for (text, before, after) in [
        (include_str!("../../core/tests/fixtures/two_loads.xir"), 2, 1),
        (include_str!("../../core/tests/fixtures/load_store_load.xir"), 3, 3),
    ] {
        let m = parse(text);
        let topo = grid("2x2");
        let init = xstencil_exec::random_init(&pipeline(&m, "propagate-bounds"), 4).unwrap();
        let serial = run_serial_stencil(&pipeline(&m, "propagate-bounds"), &init, 1).unwrap();
        let decomposed = pipeline(&m, "decompose grid=2x2");
        assert_eq!(decomposed.count_ops("dmp.swap"), before);
        let pruned = pipeline(&decomposed, "eliminate-redundant-swaps");
        assert_eq!(pruned.count_ops("dmp.swap"), after);
        let core = Bounds::new(vec![0, 0], vec![32, 32]);
        for (m, level) in [(pruned.clone(), Level::Dmp), (pipeline(&pruned, "lower-dmp-to-mpi,lower-mpi-to-func"), Level::Func)] {
            let out = simulate_distributed(&m, &topo, &init, 1, level, &SimOptions::default()).unwrap();
            assert_core_equal(&serial, &out.outputs, &core);
        }
    }
}

#[test]
fn dropping_a_needed_swap_is_detected() {
    let m = parse(include_str!("../../core/tests/fixtures/load_store_load.xir"));
    let init = xstencil_exec::random_init(&pipeline(&m, "propagate-bounds"), 4).unwrap();
    let serial = run_serial_stencil(&pipeline(&m, "propagate-bounds"), &init, 1).unwrap();
    let text = xstencil_core::ir::print_module(&pipeline(&m, "decompose grid=2x2"));
    let last = text.rfind("    dmp.swap").unwrap();
    let end = last + text[last..].find('\n').unwrap() + 1;
    let broken = parse(&format!("{}{}", &text[..last], &text[end..]));
    let out = simulate_distributed(&broken, &grid("2x2"), &init, 1, Level::Dmp, &SimOptions::default()).unwrap();
    let core = Bounds::new(vec![0, 0], vec![32, 32]);
    assert!(!out.outputs[3].bitwise_eq_on(&serial[3], &core));
}

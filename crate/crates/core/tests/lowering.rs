use std::collections::HashSet;

use xstencil_core::ir::{parse_module, print_module, structurally_equal, verify_module, Attribute, Module, Operation};
use xstencil_core::mpi::{exchange_tag, AbiError, AbiTable};
use xstencil_core::passes::run_pipeline;

fn parse(text: &str) -> Module {
    parse_module(text).unwrap_or_else(|e| panic!("{e}"))
}

fn run(m: &Module, p: &str) -> Module {
    let out = run_pipeline(m, p).unwrap_or_else(|e| panic!("{p}: {e}"));
    verify_module(&out).unwrap_or_else(|d| panic!("{p}: {d:?}"));
    out
}

fn count_in(ops: &[Operation], name: &str) -> usize {
    let mut n = 0;
    for op in ops {
        op.walk(&mut |o| n += usize::from(o.name == name));
    }
    n
}

/// Top-level ops of the first function.
fn body(m: &Module) -> &[Operation] {
    &m.functions().next().unwrap().regions[0].ops
}

/// Count of `name` inside and outside the function's `scf.for` loops.
fn inside_outside(m: &Module, name: &str) -> (usize, usize) {
    let (loops, rest): (Vec<Operation>, Vec<Operation>) = body(m).iter().cloned().partition(|o| o.name == "scf.for");
    (count_in(&loops, name), count_in(&rest, name))
}

#[test]
fn listing2_swap_lowers_to_four_requests() {
    let m = run(&parse(include_str!("fixtures/listing2.xir")), "lower-dmp-to-mpi");
    assert_eq!(m.count_ops("dmp.swap"), 0);
    assert_eq!(m.count_ops("mpi.irecv"), 2);
    assert_eq!(m.count_ops("mpi.isend"), 2);
    assert_eq!(m.count_ops("mpi.waitall"), 1);
    let mut waitall_operands = 0;
    m.walk(&mut |o| {
        if o.name == "mpi.waitall" {
            waitall_operands = o.operands.len();
        }
    });
    assert_eq!(waitall_operands, 4);
    // Two pack and two unpack nests, each guarded by a neighbour test.
    let guarded: Vec<&Operation> = body(&m).iter().filter(|o| o.name == "scf.if").collect();
    assert_eq!(guarded.len(), 4);
    for g in guarded {
        assert_eq!(count_in(std::slice::from_ref(g), "scf.for"), 2);
    }
}

#[test]
fn empty_swap_emits_no_messages() {
    let m = run(&parse(include_str!("fixtures/listing1.xir")), "decompose grid=1,lower-dmp-to-mpi");
    for op in ["mpi.isend", "mpi.irecv", "mpi.waitall", "mpi.comm_rank", "dmp.swap"] {
        assert_eq!(m.count_ops(op), 0, "{op}");
    }
}

#[test]
fn hoisting_moves_setup_out_of_the_time_loop() {
    let m = parse(include_str!("fixtures/time_loop.xir"));
    let hoisted = run(&m, "decompose grid=2x2,lower-dmp-to-mpi");
    assert_eq!(inside_outside(&hoisted, "mpi.comm_rank"), (0, 1));
    assert_eq!(inside_outside(&hoisted, "mpi.comm_size"), (0, 1));
    assert_eq!(inside_outside(&hoisted, "arith.remsi"), (0, 2));
    assert_eq!(inside_outside(&hoisted, "memref.alloc"), (0, 8));
    assert_eq!(inside_outside(&hoisted, "mpi.isend"), (4, 0));

    let inline = run(&m, "decompose grid=2x2,lower-dmp-to-mpi hoist=false");
    assert_eq!(inside_outside(&inline, "mpi.comm_rank"), (1, 0));
    assert_eq!(inside_outside(&inline, "mpi.isend"), (4, 0));
}

#[test]
fn requests_are_consumed_once_after_lowering() {
    let m = run(&parse(include_str!("fixtures/time_loop.xir")), "decompose grid=2x4,lower-dmp-to-mpi");
    let mut produced = 0;
    let mut consumed = HashSet::new();
    m.walk(&mut |o| {
        if o.name == "mpi.isend" || o.name == "mpi.irecv" {
            produced += 1;
        }
        if o.name == "mpi.waitall" {
            for v in &o.operands {
                assert!(consumed.insert(*v), "request waited twice");
            }
        }
    });
    assert_eq!(produced, consumed.len());
}

#[test]
fn tags_are_distinct_per_swap_and_direction() {
    let mut seen = HashSet::new();
    for ordinal in 0..4 {
        for to in [[-1, 0], [1, 0], [0, -1], [0, 1], [1, 1], [-1, -1]] {
            assert!(seen.insert(exchange_tag(ordinal, &to)), "{ordinal} {to:?}");
        }
    }
    assert_eq!(exchange_tag(0, &[0, -1]), 1);
    assert_eq!(exchange_tag(1, &[0, 0, 1]), 27 + 1 + 3 + 18);
}

#[test]
fn send_lowers_to_a_c_call() {
    let m = run(&parse(include_str!("fixtures/listing4.xir")), "lower-mpi-to-func");
    let abi = AbiTable::mpich();
    let mut call = None;
    m.walk(&mut |o| {
        if o.name == "func.call" {
            call = Some(o.clone());
        }
    });
    let call = call.unwrap();
    assert_eq!(call.attr("callee"), Some(&Attribute::Symbol("MPI_Send".into())));
    assert_eq!(call.operands.len(), 6);
    let p = print_module(&m);
    assert!(p.contains("arith.constant 128 : i32"), "{p}");
    assert!(p.contains(&format!("arith.constant {} : i32", abi.get_i32("MPI_DOUBLE").unwrap())), "{p}");
    assert!(p.contains(&format!("arith.constant {} : i32", abi.get_i32("MPI_COMM_WORLD").unwrap())), "{p}");
    assert!(p.trim_end().ends_with("func.func @MPI_Send(!llvm.ptr, i32, i32, i32, i32, i32)\n}"), "{p}");
}

#[test]
fn declarations_are_emitted_once() {
    let two = include_str!("fixtures/listing4.xir").replace(
        "  func.return",
        "  mpi.send(%buff, %count, %dtype, %dest, %tag) : (!llvm.ptr, i32, !mpi.datatype, i32, i32) -> ()\n  func.return",
    );
    let m = run(&parse(&two), "lower-mpi-to-func");
    let decls: Vec<_> = m.functions().filter(|f| f.regions.is_empty()).filter_map(|f| f.symbol_name()).collect();
    assert_eq!(decls, ["MPI_Send"]);
    assert_eq!(m.count_ops("func.call"), 2);
}

#[test]
fn modules_without_mpi_are_unchanged() {
    let m = parse(include_str!("fixtures/listing1.xir"));
    assert!(structurally_equal(&m, &run(&m, "lower-mpi-to-func")));
    assert!(structurally_equal(&m, &run(&m, "lower-dmp-to-mpi")));
    assert!(structurally_equal(&m, &run(&m, "")));
}

#[test]
fn unknown_pass_is_an_error() {
    let m = parse(include_str!("fixtures/listing1.xir"));
    let e = run_pipeline(&m, "propagate-bounds,frobnicate").unwrap_err();
    assert!(e.to_string().contains("frobnicate"));
    assert!(run_pipeline(&m, "decompose grid=2 colour=red").is_err());
}

#[test]
fn full_chain_verifies() {
    let m = parse(include_str!("fixtures/time_loop.xir"));
    let out = run(&m, "propagate-bounds,decompose grid=2x2,eliminate-redundant-swaps,lower-dmp-to-mpi,lower-mpi-to-func");
    assert_eq!(out.count_ops("dmp.swap") + out.count_ops("mpi.isend") + out.count_ops("mpi.waitall"), 0);
    let names: HashSet<_> = out.functions().filter(|f| f.regions.is_empty()).filter_map(|f| f.symbol_name()).collect();
    for n in ["MPI_Comm_rank", "MPI_Comm_size", "MPI_Isend", "MPI_Irecv", "MPI_Waitall"] {
        assert!(names.contains(n), "{n}");
    }
}

#[test]
fn abi_tables() {
    let t = AbiTable::parse("# comment\nMPI_DOUBLE = 7\nMPI_FLOAT = 0x10 # trailing\n").unwrap();
    assert_eq!(t.get("MPI_DOUBLE"), Ok(7));
    assert_eq!(t.get("MPI_FLOAT"), Ok(16));
    assert_eq!(t.get("MPI_INT"), Err(AbiError::Missing("MPI_INT".into())));
    assert!(matches!(AbiTable::parse("MPI_DOUBLE 7"), Err(AbiError::Syntax { line: 1, .. })));
    assert!(matches!(AbiTable::parse("MPI_DOUBLE = 1\nMPI_INT = 1"), Err(AbiError::DuplicateDatatype(..))));
    assert_eq!(AbiTable::mpich().get_i32("MPI_COMM_WORLD"), Ok(0x44000000));
}

#[test]
fn missing_datatype_fails_the_lowering() {
    let dir = std::env::temp_dir().join(format!("xstencil-abi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("abi.txt");
    let full = AbiTable::mpich();
    let text: String = full.names().filter(|n| *n != "MPI_DOUBLE").map(|n| format!("{n} = {}\n", full.get(n).unwrap())).collect();
    std::fs::write(&path, text).unwrap();
    let m = parse(include_str!("fixtures/listing4.xir"));
    let e = run_pipeline(&m, &format!("lower-mpi-to-func abi={}", path.display())).unwrap_err();
    assert!(e.to_string().contains("MPI_DOUBLE"), "{e}");
    std::fs::remove_dir_all(dir).unwrap();
}

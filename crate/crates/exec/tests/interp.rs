mod common;

use common::{parse, pipeline};
use xstencil_core::dmp::GridTopology;
use xstencil_core::stencil::Bounds;
use xstencil_exec::{run_loops, simulate_distributed, Data, Elem, ExecError, FieldData, Level, Scalar, SimOptions};

/// Runs `body` in a function taking one `memref<NxTY>` output and returns
/// its contents.
fn run_body(n: usize, ty: &str, body: &str) -> Result<Vec<Scalar>, ExecError> {
    let text = format!("func.func @f(%out : memref<{n}x{ty}>) {{\n{body}  func.return\n}}\n");
    let elem = if ty == "f64" { Elem::F64 } else { Elem::I64 };
    let out = run_loops(&parse(&text), &[FieldData::zeros("out", Bounds::from_shape(&[n as i64]), elem)], 1)?;
    Ok((0..n).map(|i| out[0].data.get(i)).collect())
}

fn ints(v: &[i64]) -> Vec<Scalar> {
    v.iter().map(|&x| Scalar::Int(x)).collect()
}

#[test]
fn integer_arithmetic() {
    let r = run_body(
        2,
        "i64",
        "  %a = arith.constant 42 : i64\n  %b = arith.addi %a, %a : i64\n  %c0 = arith.constant 0 : index\n  %c1 = arith.constant 1 : index\n  memref.store %a, %out[%c0] : memref<2xi64>\n  memref.store %b, %out[%c1] : memref<2xi64>\n",
    );
    assert_eq!(r.unwrap(), ints(&[42, 84]));
}

#[test]
fn float_arithmetic() {
    let r = run_body(
        1,
        "f64",
        "  %a = arith.constant 1.5 : f64\n  %b = arith.constant 2.5 : f64\n  %s = arith.addf %a, %b : f64\n  %c0 = arith.constant 0 : index\n  memref.store %s, %out[%c0] : memref<1xf64>\n",
    );
    assert_eq!(r.unwrap(), [Scalar::F64(4.0)]);
}

const LOOP: &str = "  %lo = arith.constant 0 : index\n  %hi = arith.constant HI : index\n  %st = arith.constant 1 : index\n  scf.for %i = %lo to %hi step %st {\n    %v = arith.index_cast %i : index to i64\n    memref.store %v, %out[%i] : memref<4xi64>\n    scf.yield\n  }\n";

#[test]
fn loops_run_their_range() {
    assert_eq!(run_body(4, "i64", &LOOP.replace("HI", "4")).unwrap(), ints(&[0, 1, 2, 3]));
    assert_eq!(run_body(4, "i64", &LOOP.replace("HI", "0")).unwrap(), ints(&[0, 0, 0, 0]));
}

#[test]
fn nested_loops_are_row_major() {
    let body = "  %c0 = arith.constant 0 : index
  %c1 = arith.constant 1 : index
  %c2 = arith.constant 2 : index
  %c3 = arith.constant 3 : index
  %one = arith.constant 1 : i64
  %n = scf.for %i = %c0 to %c3 step %c1 iter_args(%a = %c0) -> (index) {
    %m = scf.for %j = %c0 to %c2 step %c1 iter_args(%b = %a) -> (index) {
      %k = arith.muli %i, %c2 : index
      %p = arith.addi %k, %j : index
      %old = memref.load %out[%p] : memref<6xi64>
      %step = arith.index_cast %b : index to i64
      %new = arith.addi %step, %one : i64
      memref.store %new, %out[%p] : memref<6xi64>
      %b2 = arith.addi %b, %c1 : index
      scf.yield %b2 : index
    }
    scf.yield %m : index
  }
";
    assert_eq!(run_body(6, "i64", body).unwrap(), ints(&[1, 2, 3, 4, 5, 6]));
}

#[test]
fn memref_store_load_and_zero_init() {
    let body = "  %c1 = arith.constant 1 : index
  %c2 = arith.constant 2 : index
  %c0 = arith.constant 0 : index
  %buf = memref.alloc() : memref<3x4xf64>
  %seven = arith.constant 7.0 : f64
  memref.store %seven, %buf[%c1, %c2] : memref<3x4xf64>
  %x = memref.load %buf[%c1, %c2] : memref<3x4xf64>
  %z = memref.load %buf[%c2, %c1] : memref<3x4xf64>
  memref.store %x, %out[%c0] : memref<2xf64>
  memref.store %z, %out[%c1] : memref<2xf64>
  memref.dealloc %buf : memref<3x4xf64>
";
    assert_eq!(run_body(2, "f64", body).unwrap(), [Scalar::F64(7.0), Scalar::F64(0.0)]);
}

#[test]
fn out_of_bounds_traps_at_the_op() {
    let body = "  %c0 = arith.constant 0 : index
  %c108 = arith.constant 108 : index
  %buf = memref.alloc() : memref<108x108xf32>
  %x = memref.load %buf[%c108, %c0] : memref<108x108xf32>
";
    match run_body(1, "f64", body) {
        Err(ExecError::Trap { op, message }) => assert!(op.contains("memref.load") && message.contains("108"), "{op}: {message}"),
        other => panic!("expected a trap, got {other:?}"),
    }
}

#[test]
fn calls_pass_arguments_and_results() {
    let text = "func.func @f(%out : memref<1xf64>) {
  %c0 = arith.constant 0 : index
  %a = arith.constant 2.5 : f64
  %b = func.call @id(%a) : (f64) -> f64
  memref.store %b, %out[%c0] : memref<1xf64>
  func.return
}
func.func @id(%x : f64) -> f64 {
  func.return %x : f64
}
";
    let out = run_loops(&parse(text), &[FieldData::zeros("out", Bounds::from_shape(&[1]), Elem::F64)], 1).unwrap();
    assert_eq!(out[0].data.get(0), Scalar::F64(2.5));
}

/// Four ranks with four points each. Every rank stores, into its own
/// field: the global sum and maximum of its first points (allreduce), the
/// root's first point (bcast); the root additionally gathers all first
/// points and receives the sum of every rank's second point (reduce).
const COLLECTIVES: &str = "builtin.module {
  func.func @coll(%f : !field<[0,4]xf64>) attributes {dmp.domain = #stencil.bounds<[0], [16]>, dmp.grid = #dmp.grid<4>, dmp.reference = @coll_serial} {
    %m = builtin.unrealized_conversion_cast %f : !field<[0,4]xf64> to memref<4xf64>
    %c0 = arith.constant 0 : index
    %c1 = arith.constant 1 : index
    %c2 = arith.constant 2 : index
    %c3 = arith.constant 3 : index
    %first = memref.alloc() : memref<1xf64>
    %second = memref.alloc() : memref<1xf64>
    %x = memref.load %m[%c0] : memref<4xf64>
    %y = memref.load %m[%c1] : memref<4xf64>
    memref.store %x, %first[%c0] : memref<1xf64>
    memref.store %y, %second[%c0] : memref<1xf64>
    %sum = memref.alloc() : memref<1xf64>
    %max = memref.alloc() : memref<1xf64>
    %root = memref.alloc() : memref<1xf64>
    %red = memref.alloc() : memref<1xf64>
    %all = memref.alloc() : memref<4xf64>
    %p0, %n0, %t0 = mpi.unwrap_memref(%first) : (memref<1xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    %p1, %n1, %t1 = mpi.unwrap_memref(%sum) : (memref<1xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    %p2, %n2, %t2 = mpi.unwrap_memref(%max) : (memref<1xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    %p3, %n3, %t3 = mpi.unwrap_memref(%second) : (memref<1xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    %p4, %n4, %t4 = mpi.unwrap_memref(%red) : (memref<1xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    %p5, %n5, %t5 = mpi.unwrap_memref(%all) : (memref<4xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    %p6, %n6, %t6 = mpi.unwrap_memref(%root) : (memref<1xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
    mpi.allreduce(%p0, %p1, %n0, %t0) {op = \"sum\"} : (!llvm.ptr, !llvm.ptr, i32, !mpi.datatype) -> ()
    mpi.allreduce(%p0, %p2, %n0, %t0) {op = \"max\"} : (!llvm.ptr, !llvm.ptr, i32, !mpi.datatype) -> ()
    mpi.reduce(%p3, %p4, %n3, %t3) {op = \"sum\"} : (!llvm.ptr, !llvm.ptr, i32, !mpi.datatype) -> ()
    mpi.gather(%p0, %p5, %n0, %t0) : (!llvm.ptr, !llvm.ptr, i32, !mpi.datatype) -> ()
    memref.store %x, %root[%c0] : memref<1xf64>
    mpi.bcast(%p6, %n6, %t6) : (!llvm.ptr, i32, !mpi.datatype) -> ()
    %s = memref.load %sum[%c0] : memref<1xf64>
    %mx = memref.load %max[%c0] : memref<1xf64>
    %rt = memref.load %root[%c0] : memref<1xf64>
    memref.store %s, %m[%c0] : memref<4xf64>
    memref.store %mx, %m[%c1] : memref<4xf64>
    memref.store %rt, %m[%c2] : memref<4xf64>
    %rank = mpi.comm_rank() : () -> i32
    %zero = arith.constant 0 : i32
    %is_root = arith.cmpi eq, %rank, %zero : i32
    scf.if %is_root {
      %r = memref.load %red[%c0] : memref<1xf64>
      memref.store %r, %m[%c3] : memref<4xf64>
      %g0 = memref.load %all[%c0] : memref<4xf64>
      %g1 = memref.load %all[%c1] : memref<4xf64>
      %g2 = memref.load %all[%c2] : memref<4xf64>
      %g3 = memref.load %all[%c3] : memref<4xf64>
      %gs = arith.addf %g0, %g1 : f64
      %gt = arith.addf %gs, %g2 : f64
      %gu = arith.addf %gt, %g3 : f64
      memref.store %gu, %m[%c2] : memref<4xf64>
      scf.yield
    }
    func.return
  }
  func.func @coll_serial(%f : !field<[0,16]xf64>) attributes {dmp.serial_reference} {
    func.return
  }
}
";

#[test]
fn collectives_reduce_left_to_right_at_root_zero() {
    let m = parse(COLLECTIVES);
    let init = vec![FieldData::from_fn("f", Bounds::new(vec![0], vec![16]), Elem::F64, |p| 0.1 * p[0] as f64 + 0.3)];
    let v = |i: i64| 0.1 * i as f64 + 0.3;
    let firsts = [v(0), v(4), v(8), v(12)];
    let sum = ((firsts[0] + firsts[1]) + firsts[2]) + firsts[3];
    let reduced = ((v(1) + v(5)) + v(9)) + v(13);
    let mut want = vec![0.0; 16];
    for r in 0..4 {
        want[4 * r] = sum;
        want[4 * r + 1] = v(12);
        want[4 * r + 2] = firsts[0];
        want[4 * r + 3] = v(4 * r as i64 + 3);
    }
    want[2] = sum;
    want[3] = reduced;
    let topo = GridTopology::parse("4").unwrap();
    for (module, level) in [(m.clone(), Level::Mpi), (pipeline(&m, "lower-mpi-to-func"), Level::Func)] {
        let out = simulate_distributed(&module, &topo, &init, 1, level, &SimOptions::default()).unwrap();
        let got: Vec<f64> = (0..16).map(|i| out.outputs[0].data.get(i).as_f64()).collect();
        assert_eq!(got, want, "{level:?}");
    }
}

#[test]
fn data_round_trips_through_bits() {
    let mut d = Data::zeros(Elem::F32, 3);
    d.set(1, Scalar::F32(-0.0)).unwrap();
    assert!(!d.bitwise_eq(&Data::zeros(Elem::F32, 3)));
    assert!(d.set(0, Scalar::Int(1)).is_err());
}

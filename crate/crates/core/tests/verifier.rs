use xstencil_core::ir::{parse_module, verify_module};

/// Parses and verifies; returns all messages, parse errors included.
fn problems(text: &str) -> Vec<String> {
    match parse_module(text) {
        Err(e) => vec![e.to_string()],
        Ok(m) => verify_module(&m).err().unwrap_or_default().iter().map(ToString::to_string).collect(),
    }
}

fn expect(text: &str, needle: &str) {
    let p = problems(text);
    assert!(p.iter().any(|m| m.contains(needle)), "expected '{needle}' in {p:?}");
}

const APPLY_1D: &str = "func.func @f(%in : !field<[-1,9]xf64>, %out : !field<[0,8]xf64>) {
  %0 = stencil.load %in : !field<[-1,9]xf64> -> !temp<?xf64>
  %1 = stencil.apply(%2 = %0 : !temp<?xf64>) -> !temp<?xf64> {
    %3 = stencil.access %2[OFFSET] : !temp<?xf64>
    stencil.return %3 : f64
  }
  stencil.store %1 to %out (<[0], [UB]>) : !temp<?xf64> to !field<[0,8]xf64>
  func.return
}
";

fn apply(offset: &str, ub: &str) -> String {
    APPLY_1D.replace("OFFSET", offset).replace("UB", ub)
}

#[test]
fn well_formed_apply_verifies() {
    assert!(problems(&apply("-1", "8")).is_empty());
}

#[test]
fn ssa_violations() {
    expect("func.func @f(%a : f64) -> f64 {\n  %0 = arith.addf %a, %9 : f64\n  func.return %0 : f64\n}\n", "undefined value");
    expect("func.func @f(%a : f64) -> f64 {\n  %0 = arith.addf %a, %a : f64\n  %0 = arith.mulf %a, %a : f64\n  func.return %0 : f64\n}\n", "more than once");
}

#[test]
fn rank_mismatches() {
    expect(&apply("0, 1", "8"), "rank");
    let store = apply("0", "8").replace("(<[0], [8]>)", "(<[0, 0], [8, 8]>)");
    expect(&store, "rank");
}

#[test]
fn store_out_of_bounds() {
    expect(&apply("0", "9"), "exceeds the field bounds");
}

#[test]
fn request_linearity() {
    let base = "func.func @f(%ref : memref<8xf64>, %p : i32, %tag : i32) {
  %b, %n, %t = mpi.unwrap_memref(%ref) : (memref<8xf64>) -> (!llvm.ptr, i32, !mpi.datatype)
  %r = mpi.isend(%b, %n, %t, %p, %tag) : (!llvm.ptr, i32, !mpi.datatype, i32, i32) -> !mpi.request
WAITS  func.return
}
";
    let once = base.replace("WAITS", "  mpi.wait(%r) : (!mpi.request) -> ()\n");
    assert!(problems(&once).is_empty(), "{:?}", problems(&once));
    expect(&base.replace("WAITS", ""), "consumed 0 times");
    expect(&base.replace("WAITS", "  mpi.wait(%r) : (!mpi.request) -> ()\n  mpi.wait(%r) : (!mpi.request) -> ()\n"), "consumed 2 times");
}

#[test]
fn exchanges_must_fit_the_buffer() {
    let text = include_str!("fixtures/listing2.xir").replace("108x108", "104x104");
    expect(&text, "does not fit");
}

#[test]
fn all_problems_are_reported() {
    let text = apply("0, 1", "9");
    assert!(problems(&text).len() >= 2, "{:?}", problems(&text));
}

#[test]
fn diagnostics_name_the_op_path() {
    let p = problems(&apply("0, 1", "8"));
    assert!(p.iter().any(|m| m.contains("stencil.apply > stencil.access")), "{p:?}");
    assert!(p.iter().any(|m| m.starts_with("4:")), "{p:?}");
}

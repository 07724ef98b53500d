use xstencil_core::ir::{parse_module, print_module, structurally_equal, verify_module, Module};
use xstencil_core::passes::run_pipeline;

const LISTINGS: [(&str, &str); 3] = [
    ("jacobi", include_str!("fixtures/listing1.xir")),
    ("exchange", include_str!("fixtures/listing2.xir")),
    ("send", include_str!("fixtures/listing4.xir")),
];

fn reparse(m: &Module) -> Module {
    let text = print_module(m);
    parse_module(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

#[test]
fn listings_parse_verify_and_reprint() {
    for (name, text) in LISTINGS {
        let m = parse_module(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        verify_module(&m).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        let again = reparse(&m);
        assert!(structurally_equal(&m, &again), "{name}");
        // Printing is a fixpoint after one round.
        assert_eq!(print_module(&m), print_module(&again), "{name}");
    }
}

#[test]
fn every_lowering_stage_round_trips() {
    let m = parse_module(LISTINGS[0].1).unwrap();
    for p in [
        "propagate-bounds",
        "propagate-bounds,lower-stencil-to-loops",
        "decompose grid=4",
        "decompose grid=4,eliminate-redundant-swaps,lower-dmp-to-mpi",
        "decompose grid=4,lower-dmp-to-mpi hoist=false",
        "decompose grid=2,lower-dmp-to-mpi,lower-mpi-to-func",
    ] {
        let out = run_pipeline(&m, p).unwrap_or_else(|e| panic!("{p}: {e}"));
        verify_module(&out).unwrap_or_else(|d| panic!("{p}: {d:?}"));
        assert!(structurally_equal(&out, &reparse(&out)), "{p}");
    }
}

#[test]
fn generic_and_custom_forms_agree() {
    let custom = "func.func @f(%a : f64) -> f64 {\n  %0 = arith.addf %a, %a : f64\n  func.return %0 : f64\n}\n";
    let generic = "func.func @f(%a : f64) -> f64 {\n  %0 = \"arith.addf\"(%a, %a) : (f64, f64) -> f64\n  func.return %0 : f64\n}\n";
    assert!(structurally_equal(&parse_module(custom).unwrap(), &parse_module(generic).unwrap()));
}

#[test]
fn structural_equality_sees_attribute_changes() {
    let a = parse_module(LISTINGS[1].1).unwrap();
    let b = parse_module(&LISTINGS[1].1.replace("source offset [0, 4]", "source offset [0, 3]")).unwrap();
    assert!(!structurally_equal(&a, &b));
}

#[test]
fn parse_errors_carry_positions() {
    let e = parse_module("func.func @f() {\n  %0 = arith.constant : f64\n}\n").unwrap_err();
    assert_eq!(e.line, 2);
    assert!(e.col > 1);
    let e = parse_module("func.func @f() {\n  func.return\n").unwrap_err();
    assert!(e.message.contains('}'), "{}", e.message);
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn xstencil(args: &[&str], stdin: &str) -> Out {
    let mut child = Command::new(env!("CARGO_BIN_EXE_xstencil"))
        .args(args)
        .env_remove("XSTENCIL_ABI")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    Out {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str], stdin: &str) -> String {
    let o = xstencil(args, stdin);
    assert_eq!(o.code, 0, "xstencil {args:?} failed:\n{}", o.stderr);
    o.stdout
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn invalid_fixtures() -> Vec<PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(fixture("invalid")).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn generated_kernel_survives_the_full_pipe() {
    let kernel = ok(&["gen-kernel", "heat", "--dims", "2", "--sdo", "4", "--shape", "64x64"], "");
    let lowered = ok(&["pipeline", "propagate-bounds,decompose grid=2x2,lower-dmp-to-mpi,lower-mpi-to-func"], &kernel);
    assert!(lowered.contains("@MPI_Isend"));
    let o = xstencil(&["simulate", "--check", "-T", "3"], &lowered);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("check passed"), "{}", o.stdout);
}

#[test]
fn decompose_then_lower_yields_nonblocking_exchanges() {
    let kernel = ok(&["gen-kernel", "heat", "--dims", "2", "--shape", "16x16"], "");
    let m = ok(&["pipeline", "propagate-bounds,decompose-stencil grid=2x2,lower-dmp-to-mpi"], &kernel);
    for op in ["mpi.isend", "mpi.irecv", "mpi.waitall"] {
        assert!(m.contains(op), "missing {op}");
    }
    ok(&["verify"], &m);
}

#[test]
fn every_invalid_fixture_is_rejected_with_a_located_diagnostic() {
    let files = invalid_fixtures();
    assert!(files.len() >= 10);
    for f in files {
        let path = f.to_str().unwrap();
        let o = xstencil(&["verify", path], "");
        assert_eq!(o.code, 1, "{path} was accepted");
        let first = o.stderr.lines().next().unwrap_or("");
        let rest = first.strip_prefix(path).and_then(|r| r.strip_prefix(':')).unwrap_or_else(|| panic!("{path}: {first}"));
        let mut parts = rest.splitn(3, ':');
        assert!(parts.next().unwrap().parse::<u32>().is_ok(), "{first}");
        assert!(parts.next().unwrap().parse::<u32>().is_ok(), "{first}");
    }
}

#[test]
fn print_is_a_fixed_point() {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/listing2.xir")).unwrap();
    let once = ok(&["print"], &text);
    assert_eq!(ok(&["print"], &once), once);
    ok(&["parse"], &text);
}

#[test]
fn bench_emits_a_header_and_one_row_per_config() {
    let out = ok(&["bench", "--shape", "16x16", "--shape", "24x24", "--grid", "serial", "-T", "2"], "");
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines[0], xstencil_exec::bench::CSV_HEADER);
    assert_eq!(lines.len(), 3, "{out}");
    assert!(lines[1].starts_with("heat,16x16,2,serial,2,256,"));
    assert!(lines[2].starts_with("heat,24x24,2,serial,2,576,"));
}

#[test]
fn run_serial_prints_every_field() {
    let kernel = ok(&["gen-kernel", "copy", "--dims", "1", "--shape", "8"], "");
    let m = ok(&["pipeline", "propagate-bounds"], &kernel);
    let out = ok(&["run-serial", "-T", "2", "--stats"], &m);
    assert!(out.lines().any(|l| l.contains("sum")), "{out}");
}

#[test]
fn pipeline_list_names_the_passes() {
    let out = ok(&["pipeline", "--list"], "");
    for p in ["propagate-bounds", "decompose", "lower-dmp-to-mpi", "lower-mpi-to-func"] {
        assert!(out.contains(p), "{p} missing from {out}");
    }
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let kernel = ok(&["gen-kernel", "heat", "--dims", "2", "--shape", "16x16"], "");
    for (args, stdin) in [
        (vec!["pipeline", "no-such-pass"], kernel.as_str()),
        (vec!["pipeline", "decompose grid=3x3"], kernel.as_str()),
        (vec!["parse"], "func.func @f( {"),
        (vec!["verify", "/nonexistent/file.xir"], ""),
        (vec!["gen-kernel", "heat", "--dims", "2", "--sdo", "3"], ""),
        (vec!["simulate", "--abi", "/nonexistent/abi.txt"], kernel.as_str()),
    ] {
        let o = xstencil(&args, stdin);
        assert_ne!(o.code, 0, "{args:?} succeeded");
        assert!(!o.stderr.trim().is_empty(), "{args:?} printed no diagnostic");
    }
}

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cwsl_core::io::{self, ProblemFile, SpectrumFile};
use cwsl_core::{Potential, ProblemSpec, ValidationMode, C64};
use serde_json::json;

fn cwsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cwsl")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, v: &serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn neumann() -> serde_json::Value {
    json!({"schema_version": 1, "mode": "relaxed", "problem": {
        "T": 1.0, "b": 0.5, "q": {"expression": "zero"},
        "a1": [1, 0], "a2": [1, 0], "h": [0, 0], "H": [0, 0], "d1": [1, 0], "d2": [0, 0]}})
}

/// Layered geometry; `q` and the boundary data are zero unless given.
fn layered(q: serde_json::Value, h: [f64; 2], big_h: [f64; 2], d2: [f64; 2]) -> serde_json::Value {
    json!({"schema_version": 1, "mode": "strict", "problem": {
        "T": 1.5, "b": 0.6, "q": q,
        "a1": [1.2f64.cos(), 1.2f64.sin()], "a2": [1.1, 0], "h": h, "H": big_h,
        "d1": [0.3f64.cos(), 0.3f64.sin()], "d2": d2}})
}

/// Zero-mean bump left of `b` on a nearly real geometry, where the
/// reconstruction is well posed.
fn well_posed() -> ProblemSpec {
    ProblemSpec {
        length: 1.5,
        interface: 0.6,
        potential: Potential::from_fn(1.5, 601, |x| C64::new(3.0, 1.5) * (x - 0.3) * (-60.0 * (x - 0.3f64).powi(2)).exp()),
        a1: C64::from_polar(1.0, 0.001),
        a2: C64::new(1.0, 0.0),
        h: C64::new(0.0, 0.0),
        big_h: C64::new(0.0, 0.0),
        d1: C64::from_polar(1.0, 0.3),
        d2: C64::new(0.0, 0.0),
    }
}

#[test]
fn forward_reproduces_neumann_spectrum_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.json", &neumann());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = cwsl(&["forward", "--input", s(&input), "--output", s(out), "--num-eigenvalues", "10"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let file = io::read_spectrum(&a).unwrap();
    assert_eq!(file.mode, ValidationMode::Relaxed);
    for d in &file.entries {
        let want = (d.k as f64 * PI).powi(2);
        assert!((d.lambda - want).norm() <= 1e-8 * want.max(1.0), "k = {}: {}", d.k, d.lambda);
    }
    // a spectrum file survives a parse/serialize cycle unchanged
    let again: SpectrumFile = io::parse_versioned(&io::to_json(&file).unwrap(), "spectrum").unwrap();
    assert_eq!(again, file);
}

#[test]
fn regularity_violation_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    // omega- = d1 a2 - a1 / d1 = 0
    let mut v = neumann();
    v["mode"] = json!("strict");
    let input = write(dir.path(), "p.json", &v);
    let o = cwsl(&["forward", "--input", s(&input), "--output", s(&dir.path().join("o.json")), "--num-eigenvalues", "5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("RegularityViolation"), "{}", stderr(&o));
}

#[test]
fn schema_problems_exit_2_and_io_problems_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let mut v = neumann();
    v["schema_version"] = json!(3);
    let input = write(dir.path(), "v3.json", &v);
    let o = cwsl(&["forward", "--input", s(&input), "--output", s(&out), "--num-eigenvalues", "5"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("schema_version 3"));

    let input = dir.path().join("inf.json");
    let raw = r#"{"schema_version": 1, "mode": "relaxed", "problem": {"T": 1.0, "b": 0.5,
        "q": {"grid": [0.0, 1.0], "values": [[0, 0], [1e400, 0]]},
        "a1": [1, 0], "a2": [1, 0], "h": [0, 0], "H": [0, 0], "d1": [1, 0], "d2": [0, 0]}}"#;
    std::fs::write(&input, raw).unwrap();
    let o = cwsl(&["forward", "--input", s(&input), "--output", s(&out), "--num-eigenvalues", "5"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = cwsl(&["forward", "--input", s(&dir.path().join("missing.json")), "--output", s(&out), "--num-eigenvalues", "5"]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn invert_of_model_spectrum_is_zero_and_checks_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write(dir.path(), "p.json", &layered(json!({"expression": "zero"}), [0.0; 2], [0.0; 2], [0.0; 2]));
    let spectrum = dir.path().join("s.json");
    let o = cwsl(&["forward", "--input", s(&problem), "--output", s(&spectrum), "--num-eigenvalues", "24"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (out, csv) = (dir.path().join("r.json"), dir.path().join("q.csv"));
    let o = cwsl(&[
        "invert", "--spectrum", s(&spectrum), "--interval-length", "1.5", "--output", s(&out), "--truncation", "20",
        "--x-grid", "31", "--emit-csv", s(&csv), "--model-from", s(&problem),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = io::read_reconstruction(&out).unwrap();
    assert!(r.constants_supplied);
    let qmax = r.result.q.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(qmax <= 1e-6, "max |q| = {qmax:e}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,q_re,q_im"));
    assert_eq!(lines.count(), 31);

    let o = cwsl(&["invert", "--spectrum", s(&spectrum), "--interval-length", "1.5", "--output", s(&out), "--truncation", "30"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("InsufficientSamples"));
}

#[test]
fn relaxed_input_cannot_be_inverted() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "p.json", &neumann());
    let report = dir.path().join("rep.json");
    let o = cwsl(&["roundtrip", "--input", s(&input), "--num-eigenvalues", "20", "--truncation", "20", "--report", s(&report)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("StrictModeRequired"));
}

#[test]
fn roundtrip_passes_on_a_well_posed_problem_and_reports_tolerance_failures() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("p.json");
    io::write_text(&input, &io::to_json(&ProblemFile::from_spec(&well_posed(), ValidationMode::Strict)).unwrap()).unwrap();
    let report = dir.path().join("rep.json");
    let args = ["roundtrip", "--input", s(&input), "--num-eigenvalues", "30", "--truncation", "30", "--report", s(&report), "--known-constants"];
    let o = cwsl(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["passed"], json!(true));
    assert_eq!(rep["identity"].as_array().unwrap().len(), 5);

    let mut strict = args.to_vec();
    strict.extend(["--q-tol", "1e-9"]);
    std::fs::remove_file(&report).unwrap();
    let o = cwsl(&strict);
    assert_eq!(code(&o), 4);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["passed"], json!(false));
}

#[test]
fn recover_prints_the_constants() {
    let dir = tempfile::tempdir().unwrap();
    let q = json!({"expression": "gaussian", "params": {"amplitude": [0.3, 0.15], "center": 0.5, "rate": 25.0}});
    let problem = write(dir.path(), "p.json", &layered(q, [0.2, -0.1], [-0.4, 0.0], [0.1, 0.0]));
    let spectrum = dir.path().join("s.json");
    let o = cwsl(&["forward", "--input", s(&problem), "--output", s(&spectrum), "--num-eigenvalues", "40"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("c.json");
    let o = cwsl(&["recover", "--spectrum", s(&spectrum), "--interval-length", "1.5", "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let b: f64 = text.lines().find_map(|l| l.strip_prefix("b ")).unwrap().trim().parse().unwrap();
    assert!((b - 0.6).abs() < 6e-3, "{text}");
    let c: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((c["constants"]["b"].as_f64().unwrap() - b).abs() == 0.0);
}

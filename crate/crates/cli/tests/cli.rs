use std::path::PathBuf;
use std::process::{Command, Output};

fn model(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwtail"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn analyze_reports_all_conditions() {
    let m = model("two_type_p1_3.json");
    let out = run(&["analyze", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = v["report"]["checks"].as_array().unwrap();
    for c in checks {
        assert_eq!(c["status"], "pass", "{c}");
    }
    assert_eq!(checks.len(), 4);
}

#[test]
fn analyze_fails_when_condition_d_fails() {
    let m = model("mixed_rational.json");
    let out = run(&["analyze", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_writes_columns_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cmp.csv");
    let m = model("two_type_p1_3.json");
    let out = run(&[
        "compare",
        m.to_str().unwrap(),
        "--grid",
        "0.5:2:4",
        "--nodes",
        "2000",
        "--mcap",
        "20",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "x,d_quadrature_1,d_series_1,d_approx_1,d_quadrature_2,d_series_2,d_approx_2"
    );
    assert_eq!(lines.count(), 4);

    let meta_path = dir.path().join("cmp.csv.meta.json");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(meta_path).unwrap()).unwrap();
    assert_eq!(meta["tool"], "gwtail");
    assert_eq!(meta["model_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_flag_exits_with_one() {
    let out = run(&["density", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_knob_exits_with_one() {
    let m = model("two_type_p1_3.json");
    let out = run(&["series", m.to_str().unwrap(), "--fft-size", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn series_rejects_non_polynomial_model() {
    let m = model("mixed_rational.json");
    let out = run(&["series", m.to_str().unwrap(), "--grid", "1:1:1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn julia_writes_binary_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j.pgm");
    let m = model("two_type_p1_3.json");
    let out = run(&[
        "julia",
        m.to_str().unwrap(),
        "--res",
        "32x24",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"P5\n"));
    let header = b"P5\n32 24\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 32 * 24);
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn autobid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autobid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn gap_instance(dir: &Path) -> String {
    write(dir, "gap4.json", r#"{"budgets":[1,1,1,1],"values":[[4],[4],[4],[4]]}"#)
}

#[test]
fn opt_reports_fractional_and_integral_gap() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gap_instance(dir.path());
    let frac = json_of(&autobid(&["opt", "--instance", &inst, "--mode", "fractional"]));
    assert_eq!(frac["value"], 4.0);
    let both = json_of(&autobid(&["opt", "--instance", &inst, "--mode", "both"]));
    assert_eq!(both["integral"]["value"], 1.0);
    assert_eq!(both["fractional"]["value"], 4.0);
}

#[test]
fn certificate_clears_its_target() {
    let out = json_of(&autobid(&[
        "bounds",
        "certify-rfpa",
        "--alpha",
        "1.4",
        "--eta",
        "0.44",
        "--gamma",
        "0.56",
    ]));
    assert!(out["value"].as_f64().unwrap() >= 0.5555);
    let uniform = json_of(&autobid(&[
        "bounds",
        "certify-rfpa",
        "--alpha",
        "7.62",
        "--eta",
        "0.33",
        "--uniform",
    ]));
    assert_eq!(uniform["gamma_defaulted"], true);
}

#[test]
fn qp_bound_approaches_limit() {
    let out = json_of(&autobid(&[
        "bounds", "qp", "--eta", "0.5", "--alpha", "1e6", "--n", "2", "--v", "1",
    ]));
    assert!((out["poa_bound"].as_f64().unwrap() - 3.0).abs() < 1e-3);
    assert!(out["spend_lowerbound"].as_f64().unwrap() > 0.0);
}

#[test]
fn eq_commands_agree_on_the_pair_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "pair.json", r#"{"budgets":[1,1],"values":[[2],[2]]}"#);
    let bids = write(dir.path(), "bids.json", r#"{"mode":"per_query","bids":[[1],[1]]}"#);
    let verify = json_of(&autobid(&["eq", "verify", "--instance", &inst, "--bids", &bids]));
    assert_eq!(verify["is_equilibrium"], true);
    let diagnose = json_of(&autobid(&["eq", "diagnose", "--instance", &inst, "--bids", &bids]));
    assert!(diagnose["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
    let dynamics = json_of(&autobid(&["eq", "dynamics", "--instance", &inst]));
    assert_eq!(dynamics["converged"], true);
    assert_eq!(dynamics["report"]["is_equilibrium"], true);
    let poa = json_of(&autobid(&["poa", "--instance", &inst, "--bids", &bids]));
    assert_eq!(poa["poa"], 2.0);
    assert_eq!(poa["ipoa"], 1.0);
}

#[test]
fn randomized_mechanism_needs_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "pair.json", r#"{"budgets":[1,1],"values":[[2],[2]]}"#);
    let out = autobid(&["eq", "dynamics", "--instance", &inst, "--mechanism", "rfpa"]);
    assert_eq!(out.status.code(), Some(1));
    let ok = json_of(&autobid(&[
        "eq",
        "dynamics",
        "--instance",
        &inst,
        "--mechanism",
        "rfpa",
        "--alpha",
        "1.4",
    ]));
    assert!(ok["rounds"].as_u64().unwrap() >= 1);
}

#[test]
fn exit_codes() {
    assert_eq!(autobid(&["--bogus"]).status.code(), Some(1));
    assert_eq!(autobid(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(autobid(&["--help"]).status.code(), Some(0));
    assert_eq!(
        autobid(&["opt", "--instance", "/does/not/exist.json"]).status.code(),
        Some(1)
    );
    assert_eq!(
        autobid(&["bounds", "certify-rfpa", "--alpha", "0.5", "--eta", "0.4"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        autobid(&["bounds", "qp", "--eta", "0.5", "--alpha", "2", "--n", "2", "--format", "csv"])
            .status
            .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"budgets":[1],"values":[[1,2],[3]]}"#);
    assert_eq!(autobid(&["opt", "--instance", &bad]).status.code(), Some(1));
}

#[test]
fn replicate_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        let out = autobid(&[
            "replicate",
            "--quick",
            "--seed",
            "3",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(path).unwrap()
    };
    let one = run("1", "a.json");
    let four = run("4", "b.json");
    let again = run("4", "c.json");
    assert_eq!(one, four);
    assert_eq!(four, again);
    let table: Value = serde_json::from_slice(&one).unwrap();
    assert_eq!(table["all_pass"], true);
}

#[test]
fn replicate_csv_has_one_row_per_check() {
    let out = autobid(&[
        "replicate",
        "--quick",
        "--rows",
        "gap,rfpa_certificate",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("name,group,direction,claimed,measured,tolerance,pass,note")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r.contains(",true,")));
}

#[test]
fn search_output_is_deterministic() {
    let args = [
        "search",
        "--mechanism",
        "fpa",
        "--n",
        "2",
        "--q",
        "3",
        "--samples",
        "300",
        "--seed",
        "7",
    ];
    let a = autobid(&[&args[..], &["--threads", "1"]].concat());
    let b = autobid(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let v = json_of(&a);
    assert!(v["violations"].as_array().unwrap().is_empty());
    assert!(v["best_ipoa"].as_f64().unwrap() <= 2.0 + 1e-6);
}

use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(stem: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../corpus/{stem}.njava"));
    p.to_string_lossy().into_owned()
}

fn nicert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nicert")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut a = vec!["--json"];
    a.extend_from_slice(args);
    let o = nicert(&a);
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap_or_else(|e| panic!("{e}: {}", stdout(&o)));
    (code(&o), v)
}

#[test]
fn analyze_account_fails_with_upgraded_flag() {
    let o = nicert(&["analyze", &corpus("ex1_account")]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("a.extraService = Low >> High"));
}

#[test]
fn analyze_writes_certificate_that_checks() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["full", "rules", "labels"] {
        let cert = dir.path().join(format!("{kind}.nicert"));
        let cert = cert.to_str().unwrap();
        let o = nicert(&["analyze", &corpus("ex4_temp"), "--cert", cert, "--kind", kind]);
        assert_eq!(code(&o), 0, "{}", stdout(&o));
        let o = nicert(&["check", &corpus("ex4_temp"), cert]);
        assert_eq!(code(&o), 0);
        assert!(stdout(&o).starts_with("Accept"));
    }
}

#[test]
fn tampered_and_malformed_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("c.nicert");
    let cert_s = cert.to_str().unwrap();
    assert_eq!(code(&nicert(&["analyze", &corpus("ex4_temp"), "--cert", cert_s])), 0);
    let text = std::fs::read_to_string(&cert).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let edge = lines.iter().position(|l| l.starts_with("E ")).unwrap();
    let mut cut = lines.clone();
    cut.remove(edge);
    std::fs::write(&cert, cut.join("\n") + "\n").unwrap();
    let (c, v) = json(&["check", &corpus("ex4_temp"), cert_s]);
    assert_eq!(c, 1);
    assert_eq!(v["verdict"], "Reject");
    // a certificate for another program is rejected on its hash
    std::fs::write(&cert, &text).unwrap();
    assert_eq!(code(&nicert(&["check", &corpus("ex3_loop"), cert_s])), 1);
    std::fs::write(&cert, "not a certificate\n").unwrap();
    assert_eq!(code(&nicert(&["check", &corpus("ex4_temp"), cert_s])), 2);
}

#[test]
fn run_prints_flag_for_both_balances() {
    let o = nicert(&["run", &corpus("ex1_account"), "--in", "initbalance=5000"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("false"));
    let (c, v) = json(&["run", &corpus("ex1_account"), "--in", "initbalance=10000"]);
    assert_eq!(c, 0);
    assert_eq!(v["output"], serde_json::json!([true]));
    assert_eq!(v["variables"]["a.balance"], 10000);
}

#[test]
fn trace_and_oracle_disagree_on_false_positive() {
    let (c, v) = json(&["trace", &corpus("ex7_false_positive"), "--in", "input=2"]);
    assert_eq!(c, 1);
    assert_eq!(v["variables"]["low"]["label"], "Low >> High");
    assert!(v["trace"].as_array().unwrap().len() > 5);
    let (c, v) = json(&["oracle", &corpus("ex7_false_positive"), "--domain", "0..3"]);
    assert_eq!(c, 0);
    assert_eq!(v["verdict"], "NonInterferent");
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(code(&nicert(&["frobnicate"])), 2);
    assert_eq!(code(&nicert(&["analyze", "/nonexistent.njava"])), 2);
    assert_eq!(code(&nicert(&["run", &corpus("ex1_account")])), 2);
    assert_eq!(code(&nicert(&["run", &corpus("ex1_account"), "--in", "initbalance=yes"])), 2);
    assert_eq!(code(&nicert(&["oracle", &corpus("ex3_loop"), "--domain", "0..99", "--cap", "10"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.njava");
    std::fs::write(&bad, "class { }").unwrap();
    let (c, v) = json(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(c, 2);
    assert!(v["error"].as_str().unwrap().contains("bad.njava"));
}

#[test]
fn step_limit_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_nicert"))
        .args(["run", &corpus("ex5_break"), "--in", "input=0"])
        .env("NICERT_STEP_LIMIT", "5000")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("5000"));
}

/// Every command emits one JSON object with the common fields on every
/// corpus program.
#[test]
fn json_reports_have_the_common_fields() {
    let dir = tempfile::tempdir().unwrap();
    let entries = std::fs::read_dir(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")).unwrap();
    for e in entries {
        let path = e.unwrap().path();
        let file = path.to_str().unwrap();
        let cert = dir.path().join("x.nicert");
        let cert = cert.to_str().unwrap();
        let runs = [
            vec!["analyze", file, "--cert", cert],
            vec!["check", file, cert],
            vec!["oracle", file, "--domain", "1..2"],
        ];
        for args in runs {
            let (c, v) = json(&args);
            assert!(c == 0 || c == 1, "{args:?}: {v}");
            assert_eq!(v["command"], args[0]);
            assert_eq!(v["program"], file);
            assert!(v["verdict"].is_string(), "{v}");
            assert!(v.get("witness").is_some());
            assert!(v["stats"]["wall_ms"].as_f64().unwrap() >= 0.0);
            let fail = matches!(v["verdict"].as_str(), Some("Fail" | "Reject" | "Interferent"));
            assert_eq!(c == 1, fail);
        }
    }
}

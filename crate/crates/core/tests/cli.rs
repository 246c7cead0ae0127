//! End-to-end checks of the `lise` command-line driver: exit codes and
//! output files.

use std::path::Path;
use std::process::{Command, Output};

fn lise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lise"))
        .args(args)
        .output()
        .expect("run lise")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = lise(&["simulate", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lise(&[
        "simulate",
        "--scenario",
        "no-such-plant",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"scenario": "lti", "trails": 3}"#).unwrap();
    let o = lise(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_asvd_samples_is_a_config_error() {
    let o = lise(&["asvd-check", "--samples", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn window_shorter_than_step_is_a_config_error() {
    let o = lise(&[
        "analyze",
        "--scenario",
        "lti",
        "--dt",
        "0.01",
        "--fd-dt",
        "0.001",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unstable_step_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = lise(&[
        "simulate",
        "--scenario",
        "lti",
        "--dt",
        "0.5",
        "--fd-dt",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn asvd_check_reports_second_order() {
    let o = lise(&["asvd-check", "--samples", "40", "--seed", "5"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["observed_order"].as_f64().unwrap() > 1.8, "{v}");
}

#[test]
fn analyze_prints_json() {
    let o = lise(&["analyze", "--scenario", "helicopter"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

fn csv_header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_string).collect()
}

#[test]
fn simulate_writes_trial_aggregate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"scenario": "lti", "t_final": 0.5, "trials": 2, "seed": 9}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = lise(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--filter",
        "alise",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let expected: Vec<String> = [
        "t", "x_true_1", "x_true_2", "x_true_3", "x_hat_1", "x_hat_2", "x_hat_3", "d_true_1",
        "d_true_2", "d_hat_1", "d_hat_2", "tr_Px", "tr_Pd",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 0..2 {
        let p = out.join(format!("lti_alise_trial{i:04}.csv"));
        assert_eq!(csv_header(&p), expected);
        let rows = csv::Reader::from_path(&p).unwrap().records().count();
        assert!(rows > 10);
    }
    assert!(out.join("lti_alise_aggregate.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("lti_alise_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["trials"], 2);
    assert_eq!(report["seed"], 9);
    assert_eq!(report["filter"], "alise");
    let stdout: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, report);
}

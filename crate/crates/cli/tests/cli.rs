//! End-to-end runs of the `redq` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn redq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redq"))
        .args(args)
        .output()
        .expect("spawn redq")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("bad summary {text:?}: {e}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pair_ps_writes_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/q.csv");
    let o = redq(&[
        "pair-ps",
        "--lambda",
        "0.5",
        "--xmax",
        "20",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s = summary(&o);
    assert_eq!(s["converged"], true);
    assert!((s["mean"].as_f64().unwrap() - 0.78142).abs() < 2e-3);
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("x,q"));
    assert!(!csv.contains("converged:false"));
}

#[test]
fn invalid_input_exits_two() {
    let o = redq(&["pair-ps", "--lambda", "1.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let o = redq(&["pair-lps", "--lambda", "0.5", "--K", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unconverged_run_exits_three_and_marks_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.csv");
    let o = redq(&[
        "pair-ps",
        "--lambda",
        "0.9",
        "--tmax",
        "5",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(summary(&o)["converged"], false);
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().last(), Some("# converged:false"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = redq(&[
            "simulate",
            "--lambda",
            "0.7",
            "--discipline",
            "lcfs",
            "--n",
            "40",
            "--horizon",
            "200",
            "--reps",
            "2",
            "--seed",
            "9",
            "--out",
            path_str(&out),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn exact3_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exact.json");
    let o = redq(&[
        "exact3",
        "--lambda",
        "0.5",
        "--kcap",
        "10",
        "--format",
        "json",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!((v["fcfs_mean"].as_f64().unwrap() - 0.88889).abs() < 5e-6);
    assert_eq!(v["kcap"], 10);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "lambda = 0.9\nxmax = 15\n").unwrap();
    let o = redq(&["mf", "--config", path_str(&cfg), "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let from_flags = summary(&o)["mean"].as_f64().unwrap();
    let o = redq(&["mf", "--lambda", "0.5", "--xmax", "15"]);
    assert_eq!(summary(&o)["mean"].as_f64().unwrap(), from_flags);
    std::fs::write(&cfg, "lamda = 0.9\n").unwrap();
    assert_eq!(
        redq(&["mf", "--config", path_str(&cfg)]).status.code(),
        Some(1)
    );
}

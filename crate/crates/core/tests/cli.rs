//! The `mpm-transient` binary end to end.

use std::path::Path;
use std::process::Command;

use mpm_transient::cli::{read_distribution_csv, EXIT_ERROR, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpm-transient"))
}

fn model_file(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models").join(name).display().to_string()
}

#[test]
fn run_writes_checkpoints_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--builtin", "gene_expression", "--t-max", "20", "--r-star", "8"])
        .args(["--checkpoints", "5,12.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("total_error="));
    for name in ["p_t5.csv", "p_t12.5.csv", "p_t20.csv"] {
        let p = read_distribution_csv(&dir.path().join(name)).unwrap();
        assert!(p.total_mass() > 0.99 && p.total_mass() <= 1.0, "{name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let cps = summary["checkpoints"].as_array().unwrap();
    assert_eq!(cps.len(), 3);
    assert_eq!(cps[2]["t"], 20.0);
    let total = summary["total_error"].as_f64().unwrap();
    let parts: f64 = ["bounding_loss", "poisson_loss", "prune_loss"]
        .iter()
        .map(|k| summary[k].as_f64().unwrap())
        .sum();
    assert!((total - parts).abs() < 1e-12);
    let steps = summary["steps"].as_array().unwrap();
    assert_eq!(steps.len() as u64, summary["windows"].as_u64().unwrap());
    assert!(steps.iter().all(|s| s["R"].as_u64().unwrap() <= 8));
}

#[test]
fn run_accepts_model_files_and_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--model", &model_file("finite_pair.json"), "--r-star", "30", "--every", "2.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&out.stderr));
    for t in ["2.5", "5", "7.5", "10"] {
        assert!(dir.path().join(format!("p_t{t}.csv")).exists(), "{t}");
    }
}

#[test]
fn run_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["run", "--builtin", "nope", "--r-star", "5"],
        &["run", "--builtin", "gene_expression", "--r-star", "0"],
        &["run", "--builtin", "gene_expression", "--r-star", "5", "--epsilon", "2"],
        &["run", "--builtin", "gene_expression", "--r-star", "5", "--checkpoints", "9999"],
    ];
    for args in cases {
        let out = bin().args(args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(out.status.code(), Some(EXIT_ERROR), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let missing = bin().args(["run", "--r-star", "5", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_ERROR));
}

#[test]
fn time_limit_aborts_long_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--builtin", "exclusive_switch", "--r-star", "5", "--time-limit", "0.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
    assert!(String::from_utf8_lossy(&out.stderr).contains("time limit"));
}

#[test]
fn verify_passes_on_a_covering_box() {
    let out = bin()
        .args(["verify", "--model", &model_file("finite_pair.json"), "--box", "15,15", "--t", "4", "--r-star", "20"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_PASS), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn verify_is_inconclusive_on_a_leaky_box() {
    let out = bin()
        .args(["verify", "--builtin", "gene_expression", "--box", "3,3", "--t", "60"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_INCONCLUSIVE), "{}", String::from_utf8_lossy(&out.stdout));
    assert_ne!(out.status.code(), Some(EXIT_FAIL));
}

#[test]
fn verify_rejects_box_of_wrong_dimension() {
    let out = bin()
        .args(["verify", "--builtin", "gene_expression", "--box", "3", "--t", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_ERROR));
}

use std::path::Path;
use std::process::{Command, Output};

fn harmonize(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmonize"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn error_kind(o: &Output) -> String {
    let line = String::from_utf8_lossy(&o.stderr);
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonize(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "usage");

    let o = harmonize(dir.path(), &["fit", "--train", "absent.csv", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "io");

    let o = harmonize(dir.path(), &["simulate", "--preset", "ct-k4-n25", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("x.csv").exists());

    assert_eq!(harmonize(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_fit_apply_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonize(
        dir.path(),
        &["simulate", "--preset", "ct-k3-n25", "--seed", "4", "--out", "sim.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 4);

    let sim = std::fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    let lines: Vec<&str> = sim.lines().collect();
    assert_eq!(lines.len(), 76);
    assert!(lines[0].starts_with("subject_id,site,age,feature01"));
    assert!(dir.path().join("sim.truth.json").exists());

    let o = harmonize(
        dir.path(),
        &[
            "fit",
            "--train",
            "sim.csv",
            "--covariates",
            "age:spline5",
            "--out",
            "model.json",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let o = harmonize(
        dir.path(),
        &["apply", "--model", "model.json", "--data", "sim.csv", "--out", "h.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    let out: Vec<&str> = out.lines().collect();
    assert_eq!(out.len(), lines.len());
    assert_eq!(out[0], lines[0]);
    for (a, b) in out.iter().zip(&lines).skip(1) {
        let (a, b): (Vec<&str>, Vec<&str>) = (a.split(',').collect(), b.split(',').collect());
        assert_eq!(a.len(), b.len());
        assert_eq!(a[..3], b[..3]);
    }
}

#[test]
fn unseen_site_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    for (preset, out) in [("ct-k3-n25", "small.csv"), ("ct-k10-n25", "large.csv")] {
        assert!(harmonize(dir.path(), &["simulate", "--preset", preset, "--out", out])
            .status
            .success());
    }
    assert!(
        harmonize(dir.path(), &["fit", "--train", "small.csv", "--out", "m.json"])
            .status
            .success()
    );
    let o = harmonize(
        dir.path(),
        &["apply", "--model", "m.json", "--data", "large.csv", "--out", "h.csv"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_kind(&o), "unknown_site");
}

#[test]
fn reports_carry_manifest_and_result() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonize(
        dir.path(),
        &["fd", "--shape", "cube:32", "--offsets", "2", "--out", "fd.json"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fd.json")).unwrap()).unwrap();
    assert_eq!(v["manifest"]["command"], "fd");
    assert!(v["result"]["fd"].as_f64().unwrap() > 2.5);
    assert_eq!(v["result"]["occupied"], 32 * 32 * 32);
}

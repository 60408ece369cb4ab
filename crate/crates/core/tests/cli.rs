use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sobext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sobext"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sobext_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sobext"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const DISK: &str = r#"{"boundary": {"type": "disk", "center": [0, 0], "radius": 1.0}}"#;

#[test]
fn constants_flat_focal_radius() {
    let out = sobext(&["constants", "--K", "0", "--H", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["r0"].as_f64(), Some(1.0));
    assert_eq!(v["status"], "pass");
}

#[test]
fn constants_negative_curvature_flag() {
    let out = sobext(&["constants", "--K", "-1", "--H", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r0 = json(&out)["result"]["r0"].as_f64().unwrap();
    assert!((r0 - 0.5f64.atanh()).abs() < 1e-15);
}

#[test]
fn ball_preset_reproduces_constant() {
    let out = sobext(&["constants", "--R0", "1", "--G", "ball"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let expect = 1.0 + 3.0 * (82.0 + 1312.0 / 0.25);
    assert!((v["result"]["norm_bound"].as_f64().unwrap() - expect).abs() < 1e-9);
}

#[test]
fn verify_extension_on_unit_disk() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("ext.json");
    let csv = dir.path().join("eu.csv");
    let out = sobext(&[
        "verify-extension",
        "--domain",
        DISK,
        "--r",
        "0.5",
        "--samples",
        "6",
        "--quad",
        "32",
        "--seed",
        "3",
        "--report",
        report.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&report);
    let r = &v["result"];
    assert!(r["max_ratio"].as_f64().unwrap() <= r["bound"].as_f64().unwrap());
    assert_eq!(r["per_sample"].as_array().unwrap().len(), 6);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("x,y,Eu\n"));
    assert!(table.lines().count() > 100);
}

#[test]
fn malformed_json_exits_2() {
    let out = sobext(&["regularity", "--domain", "{not json", "--r", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"r\": 0.5,").unwrap();
    let out = sobext(&["--config", cfg.to_str().unwrap(), "constants"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"boundary": {"type": "disk", "radius": 1}, "tube": 0.3}"#).unwrap();
    let out = sobext(&["--config", cfg.to_str().unwrap(), "regularity"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tube"));
}

#[test]
fn negative_r_is_rejected() {
    let out = sobext(&["regularity", "--domain", DISK, "--r", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r must be positive"));
}

#[test]
fn inadmissible_tube_exits_1() {
    let out = sobext(&["regularity", "--domain", DISK, "--r", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["result"]["admissible"], false);
    let out = sobext(&["verify-extension", "--domain", DISK, "--r", "1.5", "--samples", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn heat_on_interval() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("heat.csv");
    let out = sobext(&[
        "heat",
        "--domain",
        r#"{"boundary": {"type": "interval", "length": 1}}"#,
        "--resolution",
        "128",
        "--t-steps",
        "6",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let eta = v["result"]["eta1"].as_f64().unwrap();
    assert!((eta - std::f64::consts::PI.powi(2)).abs() < 1e-3);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.lines().any(|l| l.starts_with("eigenvalue,1,")));
    assert_eq!(table.lines().filter(|l| l.starts_with("diagonal,")).count(), 6);
}

#[test]
fn sweep_runs_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"constants": {"K": 0, "H": 1}, "sweep": {"r": {"from": 0.1, "to": 0.5, "steps": 5}}}"#,
    )
    .unwrap();
    let out = sobext(&["--config", cfg.to_str().unwrap(), "sweep"]);
    assert_eq!(out.status.code(), Some(0));
    let points = json(&out)["result"]["points"].as_array().unwrap().clone();
    assert_eq!(points.len(), 5);
    let rs: Vec<f64> = points.iter().map(|p| p["params"]["r"].as_f64().unwrap()).collect();
    assert!((rs[4] - 0.5).abs() < 1e-15);
}

#[test]
fn thread_cap_is_honoured_and_validated() {
    let a = sobext_env(&["verify-extension", "--domain", DISK, "--r", "0.5", "--samples", "2", "--quad", "16"], "FE_THREADS", "1");
    let b = sobext(&["verify-extension", "--domain", DISK, "--r", "0.5", "--samples", "2", "--quad", "16"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let bad = sobext_env(&["constants"], "FE_THREADS", "zero");
    assert_eq!(bad.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surrender-lab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

fn write_config(dir: &Path, body: &str) -> String {
    let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/profile1.toml");
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!("seed = 3\n[profile]\npath = \"{}\"\n[portfolio]\nn0 = 800\nhorizon = 5\n{body}", profile.display()),
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn full_cycle_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    for cmd in ["simulate", "train", "evaluate"] {
        let o = bin(&[cmd, "--config", &cfg, "--out", out, "--models", "baseline,logistic", "--seed", "9"]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let v = json(&o.stdout);
        assert_eq!(v["status"], "ok");
        assert_eq!(v["command"], cmd);
    }
    assert!(dir.path().join("out/models/logistic_bag.json").exists());
    assert!(!dir.path().join("out/models/gbt.json").exists());
    let m: Value = json(&std::fs::read(dir.path().join("out/manifest_train.json")).unwrap());
    assert_eq!(m["master_seed"], 9);
}

#[test]
fn resample_flag_reaches_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert!(bin(&["simulate", "--config", &cfg, "--out", out]).status.success());
    let o = bin(&["train", "--config", &cfg, "--out", out, "--models", "baseline", "--resample", "smote"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = json(&std::fs::read(dir.path().join("out/manifest_train.json")).unwrap());
    assert_eq!(m["resampling"]["plan"]["scheme"], "smote");
}

#[test]
fn invalid_config_reports_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[split]\nshare = 1.5\n");
    let o = bin(&["simulate", "--config", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o.stderr);
    assert_eq!(v["status"], "error");
    assert_eq!(v["kind"], "config");
    assert!(v["path"].as_str().unwrap().contains("split.share"), "{v}");
}

#[test]
fn unknown_field_and_missing_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[portfolio.extra]\nx = 1\n");
    let o = bin(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o.stderr)["kind"], "config");

    let o = bin(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert!(!o.status.success());
    assert_eq!(json(&o.stderr)["status"], "error");

    let cfg = write_config(dir.path(), "");
    let o = bin(&["evaluate", "--config", &cfg, "--out", dir.path().join("empty").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o.stderr)["status"], "error");
}

#[test]
fn usage_errors_are_machine_readable() {
    let o = bin(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o.stderr)["kind"], "usage");
    let o = bin(&["frobnicate", "--config", "x"]);
    assert_eq!(json(&o.stderr)["kind"], "usage");
}

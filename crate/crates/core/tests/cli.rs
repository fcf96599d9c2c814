mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use tubempc::models::ModelBank;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tubempc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["--help"], dir.path())), 0);
    assert_eq!(code(&run(&["simulate", "--bogus"], dir.path())), 2);
    assert_eq!(code(&run(&["simulate", "--config", "missing.json"], dir.path())), 2);
    std::fs::write(dir.path().join("bad.json"), r#"{"dt": -1}"#).unwrap();
    assert_eq!(code(&run(&["simulate", "--config", "bad.json"], dir.path())), 2);
    // no bank in the default scenario
    assert_eq!(code(&run(&["simulate"], dir.path())), 2);
    assert_eq!(code(&run(&["metrics", "--log", "nope.csv"], dir.path())), 2);
}

#[test]
fn identify_writes_banks() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["identify", "--synthetic", "--out", "syn"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bank = ModelBank::load(&dir.path().join("syn/bank.json")).unwrap();
    assert!(bank.models.iter().filter(|e| !e.is_backup).count() >= 4);
    assert!(bank.models[bank.backup].is_backup);
    assert!(dir.path().join("syn/drive.csv").exists());

    let o = run(&["identify", "--preset", "adversarial", "--out", "adv"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        ModelBank::load(&dir.path().join("adv/bank.json")).unwrap().models.len(),
        2
    );
}

#[test]
fn simulate_and_metrics_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_config();
    let cfg = cfg.to_str().unwrap();
    for out in ["a", "b"] {
        let o = run(&["simulate", "--config", cfg, "--seed", "7", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(out).join("sim.svg").exists());
    }
    let a = std::fs::read(dir.path().join("a/sim.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/sim.csv")).unwrap());

    let m1 = run(&["metrics", "--config", cfg, "--log", "a/sim.csv"], dir.path());
    let m2 = run(&["metrics", "--config", cfg, "--log", "b/sim.csv"], dir.path());
    assert_eq!(code(&m1), 0);
    assert_eq!(m1.stdout, m2.stdout);
    let v: serde_json::Value = serde_json::from_slice(&m1.stdout).unwrap();
    assert_eq!(v["steps"], 825);
    assert_eq!(v["violations"]["total"], 0);
}

#[test]
fn verify_passes_on_shipped_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--config", default_config().to_str().unwrap()], dir.path());
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}");
    assert!(out.lines().all(|l| l.starts_with("PASS")));
}

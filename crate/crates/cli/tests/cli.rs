use std::process::Command;

use sms_cli::config::{ExperimentConfig, ExperimentId, Scale};
use sms_cli::experiments::run_to;

fn sms() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sms"))
}

#[test]
fn fixed_seed_gives_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(ExperimentId::Ex3, Scale::Desk);
    cfg.grids = 4;
    cfg.n = vec![10];
    cfg.seed = 11;
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_to(&cfg, &a).unwrap();
    run_to(&cfg, &b).unwrap();
    let ta = std::fs::read(a.join("ex3_grids.csv")).unwrap();
    let tb = std::fs::read(b.join("ex3_grids.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
    cfg.seed = 12;
    let c = dir.path().join("c");
    run_to(&cfg, &c).unwrap();
    assert_ne!(ta, std::fs::read(c.join("ex3_grids.csv")).unwrap());
}

#[test]
fn csv_header_comments_record_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::defaults(ExperimentId::Fig1, Scale::Desk);
    run_to(&cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    assert!(text.starts_with('#'));
    assert!(text.lines().any(|l| l == "# seed=0" || l.starts_with("# seed=")), "{text}");
    assert!(dir.path().join("timings.csv").exists());
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "experiment = ex4\nnot_a_key = 3\n").unwrap();
    let out = sms()
        .args(["experiment", "ex4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_experiment_exits_with_2() {
    let out = sms().args(["experiment", "ex99"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mesh_generate_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("m.mesh");
    let out = sms()
        .args(["mesh", "generate", "--n", "4", "--perturb", "0.2", "--seed", "5", "--out"])
        .arg(&mesh)
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = sms().args(["mesh", "inspect"]).arg(&mesh).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("elements 32"), "{text}");
    assert!(text.contains("audit conforming"), "{text}");
}

#[test]
fn diagnose_regression_mesh() {
    let out = sms().args(["diagnose", "--regression", "parallel-edge"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("remediated_relative_min_singular"), "{text}");
}

//! End-to-end runs of the `mdiqkd` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::config_path;

fn mdiqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdiqkd")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_every_analysis_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tally.csv");
    let cfg = config_path("relay_24db.toml");
    let o = mdiqkd(&["simulate", "--config", s(&cfg), "--seed", "3", "--pairs", "200000", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# config_sha256="));
    for pair in ["o_o", "mu_o", "o_mu", "nu_o", "o_nu", "mu_mu", "nu_nu", "s_s"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{pair},"))), "{pair} missing");
    }
    assert!(dir.path().join("tally.csv.manifest.json").exists());
}

#[test]
fn simulate_zero_pairs_gives_empty_tally() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tally.csv");
    let o = mdiqkd(&["simulate", "--config", s(&config_path("relay_24db.toml")), "--pairs", "0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1, "{text}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("relay_35db.toml");
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let o = mdiqkd(&[
            "simulate",
            "--config",
            s(&cfg),
            "--seed",
            "9",
            "--workers",
            workers,
            "--pairs",
            "300000",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv", "2"), run("b.csv", "2"));
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = mdiqkd(&["simulate", "--config", "/nonexistent/relay.toml", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config not found"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn analyze_reports_missing_pair() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("g.csv");
    let full = std::fs::read_to_string(config_path("measured_gains_24db.csv")).unwrap();
    let cut: String = full.lines().filter(|l| !l.starts_with("nu_nu,")).map(|l| format!("{l}\n")).collect();
    std::fs::write(&gains, cut).unwrap();
    let out = dir.path().join("r.csv");
    let o =
        mdiqkd(&["analyze", "--config", s(&config_path("relay_24db.toml")), "--gains", s(&gains), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing intensity pair nu_nu"), "{}", stderr(&o));
}

#[test]
fn analyze_rejects_more_errors_than_successes() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("g.csv");
    let full = std::fs::read_to_string(config_path("measured_gains_24db.csv")).unwrap();
    std::fs::write(&gains, full.replace("189673,54435", "189673,189674")).unwrap();
    let o = mdiqkd(&[
        "analyze",
        "--config",
        s(&config_path("relay_24db.toml")),
        "--gains",
        s(&gains),
        "--out",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn analyze_refuses_tally_from_another_config() {
    let dir = tempfile::tempdir().unwrap();
    let tally = dir.path().join("t.csv");
    let o =
        mdiqkd(&["simulate", "--config", s(&config_path("relay_24db.toml")), "--pairs", "1000", "--out", s(&tally)]);
    assert!(o.status.success());
    let out = dir.path().join("r.csv");
    let other = config_path("relay_35db.toml");
    let analyze = |force: bool| {
        let mut args = vec!["analyze", "--config", s(&other), "--gains", s(&tally), "--out", s(&out)];
        if force {
            args.push("--force");
        }
        mdiqkd(&args)
    };
    let o = analyze(false);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    assert!(!out.exists());
    // A thousand pairs leaves pairs unobserved, so the forced run still
    // fails, but later.
    let o = analyze(true);
    assert!(stderr(&o).contains("missing intensity pair"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_row_per_loss() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o =
        mdiqkd(&["sweep", "--config", s(&config_path("relay_24db.toml")), "--losses", "24,35,44", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3);

    let o = mdiqkd(&["sweep", "--config", s(&config_path("relay_24db.toml")), "--losses", "", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no losses given"));
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config_path("relay_24db.toml")).unwrap();
    std::fs::write(&cfg, text.replace("failure_prob = 0.0000000001", "failure_prob = 2.0")).unwrap();
    let o = mdiqkd(&["validate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("failure_prob"), "{}", stderr(&o));
    let o = mdiqkd(&["validate", "--config", s(&config_path("relay_24db.toml"))]);
    assert!(o.status.success());
}

#[test]
fn inconsistent_gains_exit_with_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let gains = dir.path().join("g.csv");
    let full = std::fs::read_to_string(config_path("measured_gains_24db.csv")).unwrap();
    // Every vacuum pair clicks, yet vacuum-decoy pairs almost never do.
    std::fs::write(&gains, full.replace("o_o,972000000,0,NA", "o_o,972000000,972000000,NA")).unwrap();
    let out = dir.path().join("r.csv");
    let o =
        mdiqkd(&["analyze", "--config", s(&config_path("relay_24db.toml")), "--gains", s(&gains), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("y11_lower,0"), "{text}");
}

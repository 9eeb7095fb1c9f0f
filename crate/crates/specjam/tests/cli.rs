//! End-to-end checks of the command-line interface: exit codes, emitted
//! files, manifest reproducibility, and run determinism at a miniature
//! scale.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specjam"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "specjam-cli-{tag}-{}-{}",
        std::process::id(),
        tag.len()
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small-but-complete run parameters: every phase exists, every file is
/// exercised, and the whole thing finishes in seconds.
fn mini_config_text() -> &'static str {
    "victim_train_slots = 400\n\
     victim_test_slots = 150\n\
     attacker_train_slots = 80\n\
     attack_delay = 60\n\
     attack_duration = 220\n\
     retrain_delay = 50\n\
     retrain_slots = 600\n\
     snapshot_count = 6\n\
     ensemble_size = 3\n\
     reload_period = 300\n\
     ensemble_duration = 320\n\
     replay_capacity = 800\n\
     minibatch = 8\n\
     history_len = 4\n\
     lstm_hidden = 6\n\
     duel_hidden = 4\n\
     collapse_window = 100\n\
     moving_avg_window = 50\n\
     gain_checkpoint_every = 100\n\
     seed = 7\n"
}

fn write_mini_config(dir: &Path) -> PathBuf {
    let path = dir.join("mini.cfg");
    std::fs::write(&path, mini_config_text()).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("usage"), "{err}");
}

#[test]
fn no_subcommand_is_usage_error() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("baseline"));
}

#[test]
fn config_error_exit_code_two() {
    let dir = tmp_dir("cfg-err");
    let out = bin()
        .args(["--set", "K_a=7", "--out"])
        .arg(dir.join("out"))
        .arg("baseline")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("K_a exceeds N_c"), "{err}");
}

#[test]
fn missing_config_file_is_runtime_error() {
    let out = bin()
        .args(["--config", "/nonexistent/specjam.cfg", "baseline"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_battery_passes() {
    let out = bin().arg("verify").output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn baseline_run_emits_expected_files() {
    let dir = tmp_dir("baseline");
    let cfg = write_mini_config(&dir);
    let outdir = dir.join("run");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
        "baseline",
    ]);
    for file in ["manifest.txt", "trace.csv", "histogram.csv", "victim_model.snap"] {
        assert!(outdir.join(file).exists(), "{file} missing");
    }
    // Trace row count equals elapsed slots (400 train + 150 test).
    let trace = std::fs::read_to_string(outdir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 550);
    // Histogram CDF ends at 1.
    let hist = std::fs::read_to_string(outdir.join("histogram.csv")).unwrap();
    let last = hist.lines().last().unwrap();
    let cdf: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!((cdf - 1.0).abs() < 1e-9);
    // Manifest echoes the overridden keys.
    let manifest = std::fs::read_to_string(outdir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("# scenario = baseline"));
}

#[test]
fn manifest_reproduces_run_byte_identically() {
    let dir = tmp_dir("manifest");
    let cfg = write_mini_config(&dir);
    let first = dir.join("first");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
        "attack",
    ]);
    let second = dir.join("second");
    run_ok(&[
        "--config",
        first.join("manifest.txt").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "attack",
    ]);
    let a = std::fs::read(first.join("trace.csv")).unwrap();
    let b = std::fs::read(second.join("trace.csv")).unwrap();
    assert_eq!(a, b);
    let ha = std::fs::read(first.join("histogram.csv")).unwrap();
    let hb = std::fs::read(second.join("histogram.csv")).unwrap();
    assert_eq!(ha, hb);
}

#[test]
fn attack_supports_every_attacker_type() {
    let dir = tmp_dir("attackers");
    let cfg = write_mini_config(&dir);
    for attacker in ["none", "random", "ideal", "dqn"] {
        let outdir = dir.join(attacker);
        run_ok(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            outdir.to_str().unwrap(),
            "attack",
            "--attacker",
            attacker,
        ]);
        let manifest = std::fs::read_to_string(outdir.join("manifest.txt")).unwrap();
        assert!(manifest.contains(&format!("attacker_type = {attacker}")));
    }
}

#[test]
fn retrain_and_analyze_roundtrip() {
    let dir = tmp_dir("retrain");
    let cfg = write_mini_config(&dir);
    let outdir = dir.join("run");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "collapse_detection=false",
        "--out",
        outdir.to_str().unwrap(),
        "retrain",
    ]);
    for file in ["transition_matrices.csv", "correlation_scores.csv"] {
        assert!(outdir.join(file).exists(), "{file} missing");
    }
    // One snapshot per interval.
    let snaps = std::fs::read_dir(outdir.join("snapshots")).unwrap().count();
    assert_eq!(snaps, 6);

    let analysis = dir.join("analysis");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        analysis.to_str().unwrap(),
        "analyze-ensemble",
        "--matrices",
        outdir.join("transition_matrices.csv").to_str().unwrap(),
    ]);
    let selection = std::fs::read_to_string(analysis.join("selection.csv")).unwrap();
    let selected = selection
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",1"))
        .count();
    assert_eq!(selected, 3);
}

#[test]
fn ensemble_run_selects_and_reports() {
    let dir = tmp_dir("ensemble");
    let cfg = write_mini_config(&dir);
    let outdir = dir.join("run");
    let out = run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
        "ensemble",
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ensemble intervals"), "{err}");
    assert!(outdir.join("selection.csv").exists());
}

#[test]
fn victim_model_preload_is_accepted() {
    let dir = tmp_dir("preload");
    let cfg = write_mini_config(&dir);
    let base = dir.join("base");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        base.to_str().unwrap(),
        "baseline",
    ]);
    let attack = dir.join("attack");
    run_ok(&[
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "victim_train_slots=50",
        "--out",
        attack.to_str().unwrap(),
        "attack",
        "--victim-model",
        base.join("victim_model.snap").to_str().unwrap(),
    ]);
    assert!(attack.join("trace.csv").exists());
}

//! Command-line contract: subcommand wiring, exit codes, file outputs.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scribbleseg"))
}

fn run_ok(args: &[&str], cwd: &Path) -> String {
    let out = bin().args(args).current_dir(cwd).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_required_flag_is_usage_error_with_usage_text() {
    let out = bin().args(["synth"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage"), "stderr: {err}");
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin()
        .args(["synth", "--out", "x", "--bogus-flag", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn runtime_failure_is_exit_two() {
    let out = bin()
        .args(["stats", "--manifest", "/nonexistent/manifest.json", "--out-csv", "/tmp/x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_stats_roundtrip_reports_sparsity_in_range() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "synth", "--out", "ds", "--n-train", "20", "--n-test", "5", "--size", "64", "--seed",
            "7",
        ],
        dir.path(),
    );
    let stdout = run_ok(
        &["stats", "--manifest", "ds/manifest.json", "--out-csv", "stats.csv"],
        dir.path(),
    );
    // overall share lands in the 1..3 percent target band
    let text = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let overall: f64 = text
        .lines()
        .find(|l| l.starts_with("overall,,"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(
        (1.0..=3.0).contains(&overall),
        "overall {overall}%\nstdout: {stdout}"
    );
}

#[test]
fn full_pipeline_at_tiny_scale() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "synth", "--out", "ds", "--n-train", "6", "--n-test", "2", "--size", "16", "--seed",
            "3",
        ],
        dir.path(),
    );
    // tiny-config JSON exercising the config-file path
    let cfg = r#"{
        "sgd": {"learning_rate": 0.01, "batch_size": 2},
        "stage": {"epochs": 2, "input_size": [16, 16]},
        "encoder": {"hidden_dim": 8, "heads": 2, "points": 2, "ffn_dim": 16},
        "model": {"backbone_channels": [8, 8, 4]}
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();

    run_ok(
        &[
            "train-weak",
            "--manifest", "ds/manifest.json",
            "--out-ckpt", "teacher.ckpt",
            "--metrics-csv", "weak.csv",
            "--config", "cfg.json",
            "--seed", "1",
        ],
        dir.path(),
    );
    run_ok(
        &[
            "pseudo",
            "--ckpt", "teacher.ckpt",
            "--manifest", "ds/manifest.json",
            "--out-cache", "cache.bin",
            "--config", "cfg.json",
        ],
        dir.path(),
    );
    run_ok(
        &[
            "train-semi",
            "--manifest", "ds/manifest.json",
            "--cache", "cache.bin",
            "--teacher-ckpt", "teacher.ckpt",
            "--out-ckpt", "student.ckpt",
            "--config", "cfg.json",
            "--seed", "1",
        ],
        dir.path(),
    );
    let stdout = run_ok(
        &[
            "eval",
            "--ckpt", "student.ckpt",
            "--manifest", "ds/manifest.json",
            "--split", "test",
            "--out-csv", "eval.csv",
            "--config", "cfg.json",
        ],
        dir.path(),
    );
    assert!(stdout.contains("mDice"), "stdout: {stdout}");

    let eval_text = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    let mut lines = eval_text.lines();
    assert_eq!(lines.next().unwrap(), "id,dice,iou");
    assert!(eval_text.lines().last().unwrap().starts_with("mean,"));

    // flags override the config file: a bad wired value must fail validation
    let out = bin()
        .args([
            "train-weak",
            "--manifest", "ds/manifest.json",
            "--out-ckpt", "x.ckpt",
            "--config", "cfg.json",
            "--input-size", "17",
        ])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

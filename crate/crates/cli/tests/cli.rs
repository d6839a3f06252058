use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn orchid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orchid"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

const TINY: &str = "scenario = \"s.json\"\nepisodes = 2\nseeds = [1]\nreference_deployments = 4\n\
[env]\nhorizon_steps = 10\n[learn]\nepisodes_per_update = 1\nminibatch = 16\n[learn.net]\nhidden = [16, 16]\n";

fn generate(dir: &Path) {
    let out = orchid(dir, &["generate", "--seed", "5", "--out", "s.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path());
    let a = fs::read(d.path().join("s.json")).unwrap();
    generate(d.path());
    assert_eq!(a, fs::read(d.path().join("s.json")).unwrap());
}

#[test]
fn train_eval_export_pipeline() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path());
    fs::write(d.path().join("run.toml"), TINY).unwrap();
    assert!(orchid(d.path(), &["train", "--config", "run.toml", "--out", "runs/orchid"]).status.success());
    assert!(orchid(
        d.path(),
        &["baseline", "--method", "static_kmeans", "--scenario", "s.json", "--config", "run.toml", "--out", "runs/km"]
    )
    .status
    .success());
    let eval = orchid(
        d.path(),
        &["eval", "--checkpoint", "runs/orchid/seed_1/checkpoint_final.json", "--scenario", "s.json", "--episodes", "2"],
    );
    assert!(eval.status.success());
    let report: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(report["aggregate"]["episodes"], 2);
    assert!(orchid(d.path(), &["export-figures", "--runs", "runs", "--out", "figs"]).status.success());
    let tidy = fs::read_to_string(d.path().join("figs/runs_tidy.csv")).unwrap();
    assert_eq!(tidy.lines().count(), 1 + 2 * 2 * 7);
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.toml"), "episodes = 0\n").unwrap();
    assert_eq!(orchid(d.path(), &["train", "--config", "bad.toml", "--out", "r"]).status.code(), Some(2));
    assert_eq!(orchid(d.path(), &["train", "--config", "missing.toml", "--out", "r"]).status.code(), Some(2));
    generate(d.path());
    assert_eq!(
        orchid(d.path(), &["baseline", "--method", "nope", "--scenario", "s.json", "--out", "b"]).status.code(),
        Some(2)
    );
}

#[test]
fn numeric_blowup_exits_with_three() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path());
    let cfg = TINY.replace("[learn]\n", "[learn]\nactor_lr = 1e300\ncritic_lr = 1e300\n");
    fs::write(d.path().join("nan.toml"), cfg).unwrap();
    let out = orchid(d.path(), &["train", "--config", "nan.toml", "--out", "r"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(d.path().join("r/seed_1/abort_diagnostic.json").is_file());
}

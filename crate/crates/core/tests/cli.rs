use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbm")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn solve(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["solve", "--problem", "bulk", "--resolution", "8", "--epochs", "10", "--eval-resolution", "9"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    nbm(&args)
}

#[test]
fn solve_writes_ten_metric_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = solve(dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,loss,lr,region,wall_seconds");
    assert_eq!(lines.len(), 11);
    for name in ["config.txt", "checkpoint.bin", "report.json", "report.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn missing_problem_is_a_usage_error() {
    let out = nbm(&["solve", "--epochs", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = nbm(&["solve", "--problem", "teapot"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("teapot"));
    let out = nbm(&["solve", "--problem", "bulk", "--approach", "magic"]);
    assert_eq!(out.status.code(), Some(2));
    let out = nbm(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_are_reproducible_from_config_and_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(solve(a.path(), &["--seed", "7"]).status.success());
    let cfg = a.path().join("config.txt");
    let out = nbm(&["solve", "--config", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(a.path().join("checkpoint.bin")).unwrap(), fs::read(b.path().join("checkpoint.bin")).unwrap());
    let losses = |p: &Path| -> Vec<String> {
        fs::read_to_string(p.join("metrics.csv")).unwrap().lines().map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",")).collect()
    };
    assert_eq!(losses(a.path()), losses(b.path()));
    let c = tempfile::tempdir().unwrap();
    assert!(solve(c.path(), &["--seed", "8"]).status.success());
    assert_ne!(fs::read(a.path().join("checkpoint.bin")).unwrap(), fs::read(c.path().join("checkpoint.bin")).unwrap());
}

#[test]
fn eval_reproduces_final_report() {
    let dir = tempfile::tempdir().unwrap();
    assert!(solve(dir.path(), &[]).status.success());
    let ckpt = dir.path().join("checkpoint.bin");
    let out = nbm(&["eval", "--problem", "bulk", "--eval-resolution", "9", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["rmse", "linf", "rel_l2", "eval_resolution"] {
        assert_eq!(eval[key], report[key], "{key}");
    }
}

#[test]
fn corrupt_checkpoint_names_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    assert!(solve(dir.path(), &[]).status.success());
    let ckpt = dir.path().join("checkpoint.bin");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&ckpt, &bytes).unwrap();
    let out = nbm(&["eval", "--problem", "bulk", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at byte"), "{}", String::from_utf8_lossy(&out.stderr));
    let out = nbm(&["eval", "--problem", "bulk", "--checkpoint", dir.path().join("absent.bin").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn convergence_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = nbm(&[
        "convergence", "--problem", "sphere", "--levels", "4,6", "--epochs", "2", "--eval-resolution", "5",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("resolution,rmse,rmse_order"));
    assert!(dir.path().join("N4").join("report.json").exists() && dir.path().join("N6").join("metrics.csv").exists());
}

#[test]
fn sampled_level_set_file_replaces_analytic_one() {
    let dir = tempfile::tempdir().unwrap();
    let grid = nbm::geometry::SampledGrid::from_fn([17, 17, 17], [-1.0; 3], [1.0; 3], |p| {
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 0.5
    })
    .unwrap();
    let path = dir.path().join("phi.raw");
    grid.write_raw(&path).unwrap();
    let run = dir.path().join("run");
    let out = nbm(&[
        "solve", "--problem", "sphere", "--resolution", "6", "--epochs", "2", "--eval-resolution", "5",
        "--levelset-file", path.to_str().unwrap(), "--out", run.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(run.join("config.txt")).unwrap().contains("levelset_file"));
    fs::write(&path, b"garbage").unwrap();
    let out = nbm(&["solve", "--problem", "sphere", "--levelset-file", path.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

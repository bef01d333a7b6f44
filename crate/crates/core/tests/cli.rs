mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mmdnet::report::{read_config, read_table};

fn mmdnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmdnet")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_SYNTH: [&str; 10] = [
    "--set",
    "synth.points=400",
    "--set",
    "synth.test_points=100",
    "--set",
    "train.epochs_pretrain=30",
    "--set",
    "train.epochs_joint=2",
    "--set",
    "synth.dim=3",
];

#[test]
fn synth_writes_reports_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let mut args = vec!["synth", "--seed", "4", "--out", path_str(out)];
        args.extend(SMALL_SYNTH);
        let o = mmdnet(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("test_metric"));
    }
    for f in ["metrics.csv", "history.csv", "model.ckpt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (cols, rows) = read_table(&a.join("metrics.csv")).unwrap();
    assert_eq!(cols, ["method", "d", "num_paired", "test_mse"]);
    assert_eq!(rows.len(), 4);
    let cfg = read_config(&a.join("metrics.csv")).unwrap();
    assert_eq!((cfg.seed, cfg.synth.dim, cfg.train.epochs_joint), (4, 3, 2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, "# toy run\nseed = 1\ntoy.points = 40\ntoy.resolution = 30\n").unwrap();
    let out = dir.path().join("out");
    let o = mmdnet(&[
        "toy-rotation",
        "--config",
        path_str(&cfg_path),
        "--seed",
        "7",
        "--set",
        "toy.resolution=45",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = read_config(&out.join("landscape.csv")).unwrap();
    assert_eq!((cfg.seed, cfg.toy.points, cfg.toy.resolution), (7, 40, 45.0));
    let (_, rows) = read_table(&out.join("landscape.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    let (_, clouds) = read_table(&out.join("clouds.csv")).unwrap();
    assert_eq!(clouds.len(), 80);
}

#[test]
fn translate_runs_on_fixture_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::linear_fixture(dir.path(), 3);
    let cfg_path = dir.path().join("translate.cfg");
    fs::write(&cfg_path, cfg.to_text()).unwrap();
    let out = dir.path().join("out");
    let o = mmdnet(&["translate", "--config", path_str(&cfg_path), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (cols, rows) = read_table(&out.join("evaluation.csv")).unwrap();
    assert_eq!(cols, ["bin", "method", "N", "precision", "num_pairs"]);
    // One bin, four method pairs, two values of N.
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r[0] == "0-100" && r[4] == "60"));
    assert!(out.join("history_60.csv").exists() && out.join("model_60.ckpt").exists());
}

#[test]
fn sweep_selects_and_refits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut args = vec![
        "sweep",
        "--out",
        path_str(&out),
        "--set",
        "sweep.grid.kernel.scale=0.5 2 8",
        "--set",
        "sweep.refit=true",
    ];
    args.extend(SMALL_SYNTH);
    let o = mmdnet(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (cols, rows) = read_table(&out.join("sweep.csv")).unwrap();
    assert_eq!(cols, ["cell", "kernel.scale", "validation_metric", "test_metric", "selected"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().filter(|r| r[4] == "true").count(), 1);
    for i in 0..3 {
        assert!(out.join(format!("cell_{i:03}/metrics.csv")).exists());
    }
    let refit = read_config(&out.join("refit/metrics.csv")).unwrap();
    assert_eq!(refit.train.validation_fraction, 0.0);
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let o = mmdnet(&["synth", "--set", "kernel.nope=1", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kernel.nope"));

    let o = mmdnet(&["synth", "--config", path_str(&dir.path().join("missing.cfg"))]);
    assert_eq!(o.status.code(), Some(1));

    let o = mmdnet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.vec");
    fs::write(&bad, "2 2\nw 1.0 2.0\nv 1.0 oops\n").unwrap();
    let o = mmdnet(&[
        "translate",
        "--set",
        &format!("translate.source_embeddings={}", path_str(&bad)),
        "--set",
        &format!("translate.target_embeddings={}", path_str(&bad)),
        "--set",
        &format!("translate.lexicon={}", path_str(&bad)),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":3:"));

    assert_eq!(mmdnet(&["--help"]).status.code(), Some(0));
}

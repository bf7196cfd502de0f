//! Helpers for driving the command-line binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TOY_CONFIG: &str = r#"{
  "seed": 5,
  "sim": {"n_nodes": 4, "t": 5, "d": 16, "n_speakers": 3, "n_train": 12, "n_test": 6, "snr_db": [0, 10]},
  "model": {"mechanism": "gcn", "n_blocks": 1, "heads": 2, "d": 16,
            "selection": {"kind": "prior", "rho": 0.8}},
  "train": {"epochs": 3, "batch_size": 4},
  "eval": {"channels": [2, 4]}
}"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adhoc-sv")).args(args).output().expect("spawn binary")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Every file under `dir`, relative path first, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Simulate, train and evaluate the toy experiment into `root`.
pub fn pipeline(root: &Path) {
    let cfg = write_config(root, TOY_CONFIG);
    let cfg = cfg.to_str().unwrap();
    let data = root.join("data");
    let model = root.join("model");
    let eval = root.join("eval");
    run_ok(&["--quiet", "--config", cfg, "--out", data.to_str().unwrap(), "simulate"]);
    run_ok(&["--quiet", "--config", cfg, "--out", model.to_str().unwrap(), "train", "--data", data.to_str().unwrap()]);
    run_ok(&[
        "--quiet",
        "--config",
        cfg,
        "--out",
        eval.to_str().unwrap(),
        "eval",
        "--checkpoint",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--dump-selection",
        "--per-node",
    ]);
}

/// Runs the toy pipeline twice and compares every output byte for byte.
pub fn determinism() -> Result<usize, String> {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    if sa.len() != sb.len() {
        return Err(format!("{} vs {} files", sa.len(), sb.len()));
    }
    for ((pa, da), (pb, db)) in sa.iter().zip(&sb) {
        if pa != pb || da != db {
            return Err(format!("{} differs", pa.display()));
        }
    }
    Ok(sa.len())
}

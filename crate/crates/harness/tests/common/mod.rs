#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bsearch"));
    cmd.env("BS_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("bsearch runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Small but complete campaign: 3 classes of 16x16 images.
pub const TINY: &str = r#"{
  "classes": 3,
  "height": 16,
  "width": 16,
  "layers": 3,
  "train_samples_per_class": 150,
  "train_epochs": 8,
  "train_min_accuracy": 0.8,
  "repetitions": 2,
  "budget": 120,
  "population": 10,
  "max_seed_retries": 30
}"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("campaign.json");
    fs::write(&path, text).unwrap();
    path
}

/// A directory holding the tiny config and trained weights.
pub fn trained(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, TINY);
    let out = run(&["train-sut", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    cfg
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn python() -> Option<&'static str> {
    Command::new("python3").arg("--version").output().ok()?.status.success().then_some("python3")
}

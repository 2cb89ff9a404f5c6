#![allow(dead_code)]

use std::path::{Path, PathBuf};

use steamflood_service::{pipeline, RunConfig};

/// One year of synthetic data and a small single-point grid: trains in seconds.
pub const SMALL_CONFIG: &str = r#"{
  "pad_id": "test-pad",
  "work_dir": "work",
  "data_dir": "data",
  "synth": { "pad_id": "test-pad", "end": "2016-12-31", "noise_sigma": 0.2, "seed": 11 },
  "train": {
    "t": 30,
    "k_grid": [14],
    "n_folds": 2,
    "grid": {
      "n_trees": [40], "max_depth": [3], "learning_rate": [0.1],
      "lambda": [1.0], "gamma": [0.0], "min_child_weight": [1.0],
      "subsample": [1.0], "seed": 3
    }
  },
  "optimizer": { "step": 0.05 }
}"#;

/// Fresh directory under cargo's per-target scratch space.
pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

/// Runs generate, ingest and train in `dir` and returns the loaded config.
pub fn trained(dir: &Path) -> RunConfig {
    let cfg = RunConfig::load(&write_config(dir, SMALL_CONFIG)).unwrap();
    pipeline::generate(&cfg).unwrap();
    pipeline::ingest(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    cfg
}

//! Run configuration, loaded from one JSON file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use steamflood_core::ingest::{ImputePolicy, SourceDescriptor};
use steamflood_core::optimize::grid_steps;
use steamflood_core::synthfield::FieldConfig;
use steamflood_core::workflow::TrainSettings;

use crate::error::{Result, ServiceError};

/// Environment variable that replaces the `--config` path.
pub const CONFIG_ENV: &str = "STEAMFLOOD_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFile {
    pub path: PathBuf,
    pub source_id: u8,
    pub column_map: BTreeMap<String, String>,
    pub date_format: String,
}

impl SourceFile {
    pub fn descriptor(&self) -> SourceDescriptor {
        SourceDescriptor {
            source_id: self.source_id,
            column_map: self.column_map.clone(),
            date_format: self.date_format.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub step: f64,
    /// Daily pad steam for plans; the latest injected total when absent.
    pub total_steam: Option<f64>,
    pub horizon_days: usize,
    /// Days from the last context day to the first horizon date; `t + 1`
    /// when absent, so every steam lag of the horizon comes from the plan.
    pub horizon_lead: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            total_steam: None,
            horizon_days: 30,
            horizon_lead: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Directory with a built UI bundle, served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub pad_id: String,
    /// Root of the artifact store.
    pub work_dir: PathBuf,
    /// Where `generate` writes, and where `ingest` looks when `sources` is empty.
    pub data_dir: PathBuf,
    pub sources: Vec<SourceFile>,
    pub synth: FieldConfig,
    pub impute: ImputePolicy,
    pub train: TrainSettings,
    pub optimizer: OptimizerConfig,
    pub server: ServerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pad_id: "pad".into(),
            work_dir: PathBuf::from("work"),
            data_dir: PathBuf::from("data"),
            sources: Vec::new(),
            synth: FieldConfig::default(),
            impute: ImputePolicy::default(),
            train: TrainSettings::default(),
            optimizer: OptimizerConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

/// The sections that determine pipeline artifacts. Optimizer and server
/// settings are excluded: their outputs are keyed by their own parameters.
#[derive(Serialize)]
struct PipelineKey<'a> {
    pad_id: &'a str,
    sources: &'a [SourceFile],
    data_dir: &'a Path,
    synth: &'a FieldConfig,
    impute: &'a ImputePolicy,
    train: &'a TrainSettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.work_dir);
        fix(&mut self.data_dir);
        for s in &mut self.sources {
            fix(&mut s.path);
        }
        if let Some(ui) = &mut self.server.ui_dir {
            fix(ui);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ServiceError::Config(m));
        if self.pad_id.trim().is_empty() {
            return bad("pad_id must not be empty".into());
        }
        self.synth.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        let t = &self.train;
        if t.k_grid.is_empty() {
            return bad("train.k_grid must not be empty".into());
        }
        if t.t == 0 || t.k_grid.contains(&0) {
            return bad("train.t and every k must be at least 1".into());
        }
        if !(t.train_frac > 0.0 && t.train_frac < 1.0) {
            return bad(format!("train.train_frac must lie in (0, 1), got {}", t.train_frac));
        }
        if t.n_folds == 0 {
            return bad("train.n_folds must be at least 1".into());
        }
        t.grid.combinations().map_err(|e| ServiceError::Config(e.to_string()))?;
        grid_steps(self.optimizer.step).map_err(|e| ServiceError::Config(format!("optimizer.step: {e}")))?;
        if self.optimizer.horizon_days == 0 {
            return bad("optimizer.horizon_days must be at least 1".into());
        }
        if let Some(total) = self.optimizer.total_steam {
            if !(total.is_finite() && total > 0.0) {
                return bad("optimizer.total_steam must be positive".into());
            }
        }
        let mut ids: Vec<u8> = self.sources.iter().map(|s| s.source_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("source_id values must be unique".into());
        }
        Ok(())
    }

    /// Short content hash of the pipeline-relevant sections.
    pub fn pipeline_hash(&self) -> String {
        let key = PipelineKey {
            pad_id: &self.pad_id,
            sources: &self.sources,
            data_dir: &self.data_dir,
            synth: &self.synth,
            impute: &self.impute,
            train: &self.train,
        };
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        sha256_hex(&bytes)[..16].to_string()
    }

    pub fn horizon_lead(&self, t: usize) -> usize {
        self.optimizer.horizon_lead.unwrap_or(t + 1)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

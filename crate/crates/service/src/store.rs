//! File-backed artifact store. Artifacts are write-once: rewriting identical
//! bytes is a no-op, different bytes are a conflict.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Result, ServiceError};

pub const PAD_TABLE: &str = "pad_table.json";
pub const PAD_TABLE_CSV: &str = "pad_table.csv";
pub const IMPUTATION_LOG: &str = "imputation_log.csv";
pub const CORRECTIONS: &str = "corrections.csv";
pub const MODEL: &str = "model.json";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const CV_TABLE: &str = "cv_table.csv";
pub const FEATURE_SPEC: &str = "feature_spec.json";
pub const METRICS: &str = "metrics.json";
pub const MONTHLY_CSV: &str = "monthly.csv";
pub const MONTHLY_JSON: &str = "monthly.json";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Writes `bytes` to `path` unless it already holds exactly those bytes.
pub fn write_once(path: &Path, bytes: &[u8]) -> Result<()> {
    match fs::read(path) {
        Ok(existing) if existing == bytes => return Ok(()),
        Ok(_) => return Err(ServiceError::Conflict(path.display().to_string())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(ServiceError::io(path, e)),
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
    }
    // Write beside the target and rename so readers never see a partial file.
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| ServiceError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ServiceError::io(path, e))
}

impl Store {
    pub fn open(cfg: &RunConfig) -> Self {
        Self {
            root: cfg.work_dir.join("runs").join(cfg.pipeline_hash()),
        }
    }

    pub fn at(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).is_file()
    }

    pub fn put(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        write_once(&path, bytes)?;
        Ok(path)
    }

    pub fn put_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(ServiceError::pipeline)?;
        bytes.push(b'\n');
        self.put(name, &bytes)
    }

    pub fn get(&self, name: &str, hint: &str) -> Result<Vec<u8>> {
        let path = self.path(name);
        fs::read(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                ServiceError::MissingArtifact {
                    name: name.to_string(),
                    hint: hint.to_string(),
                }
            } else {
                ServiceError::io(&path, e)
            }
        })
    }

    pub fn get_json<T: DeserializeOwned>(&self, name: &str, hint: &str) -> Result<T> {
        let bytes = self.get(name, hint)?;
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::Pipeline(format!("corrupt artifact {name}: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_once_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::at(dir.path().join("run"));
        store.put("a.txt", b"one").unwrap();
        store.put("a.txt", b"one").unwrap();
        assert!(matches!(store.put("a.txt", b"two"), Err(ServiceError::Conflict(_))));
        assert_eq!(store.get("a.txt", "").unwrap(), b"one");
        assert!(matches!(
            store.get("b.txt", "run x first"),
            Err(ServiceError::MissingArtifact { .. })
        ));
    }
}

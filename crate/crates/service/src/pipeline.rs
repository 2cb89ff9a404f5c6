//! Batch stages: generate, ingest, train, evaluate.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use steamflood_core::features::ForecastConfig;
use steamflood_core::gbt::GbtParams;
use steamflood_core::ingest::{ingest_sources, PadTable};
use steamflood_core::synthfield::generate as generate_field;
use steamflood_core::workflow::{band_coverage, train_pipeline, EvaluationReport, SplitDates};

use crate::config::{sha256_hex, RunConfig, SourceFile};
use crate::error::{Result, ServiceError};
use crate::store::{self, write_once, Store};

pub const SOURCES_MANIFEST: &str = "sources.json";
pub const TRUTH: &str = "truth.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub data_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub n_days: usize,
    pub n_production: usize,
    pub n_infill: usize,
    pub noise_sigma: f64,
}

/// Writes the synthetic pad's five sources, a source manifest and the
/// ground-truth parameters into `data_dir`.
pub fn generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    let field = generate_field(&cfg.synth).map_err(|e| ServiceError::Config(e.to_string()))?;
    let dir = &cfg.data_dir;
    let mut files = Vec::new();
    let mut manifest = Vec::new();
    for s in &field.sources {
        let path = dir.join(&s.name);
        write_once(&path, s.csv.as_bytes())?;
        files.push(path);
        manifest.push(SourceFile {
            path: PathBuf::from(&s.name),
            source_id: s.descriptor.source_id,
            column_map: s.descriptor.column_map.clone(),
            date_format: s.descriptor.date_format.clone(),
        });
    }
    let manifest_path = dir.join(SOURCES_MANIFEST);
    write_once(&manifest_path, &json_bytes(&manifest)?)?;
    files.push(manifest_path);
    let truth_path = dir.join(TRUTH);
    write_once(&truth_path, &json_bytes(&field.truth)?)?;
    files.push(truth_path);
    Ok(GenerateSummary {
        data_dir: dir.clone(),
        files,
        n_days: cfg.synth.n_days(),
        n_production: cfg.synth.n_production,
        n_infill: cfg.synth.n_infill,
        noise_sigma: cfg.synth.noise_sigma,
    })
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(ServiceError::pipeline)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| ServiceError::io(path, e))
}

/// Configured sources, or the manifest written by `generate`.
pub fn resolve_sources(cfg: &RunConfig) -> Result<Vec<SourceFile>> {
    if !cfg.sources.is_empty() {
        return Ok(cfg.sources.clone());
    }
    let manifest = cfg.data_dir.join(SOURCES_MANIFEST);
    if !manifest.is_file() {
        return Err(ServiceError::MissingArtifact {
            name: manifest.display().to_string(),
            hint: "list sources in the config or run `generate` first".into(),
        });
    }
    let mut sources: Vec<SourceFile> =
        serde_json::from_slice(&read(&manifest)?).map_err(|e| ServiceError::Config(format!("{}: {e}", manifest.display())))?;
    for s in &mut sources {
        if s.path.is_relative() {
            s.path = cfg.data_dir.join(&s.path);
        }
    }
    Ok(sources)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub store: PathBuf,
    pub pad_table_hash: String,
    pub date_min: NaiveDate,
    pub date_max: NaiveDate,
    pub n_days: usize,
    pub n_wells: usize,
    pub n_rows: usize,
    pub corrections: usize,
    pub imputed_cells: usize,
}

pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let sources = resolve_sources(cfg)?;
    let mut inputs = Vec::with_capacity(sources.len());
    for s in &sources {
        inputs.push((s.descriptor(), read(&s.path)?));
    }
    let table = ingest_sources(inputs, &cfg.pad_id, &cfg.impute).map_err(ServiceError::pipeline)?;
    let store = Store::open(cfg);
    let bytes = json_bytes(&table)?;
    store.put(store::PAD_TABLE, &bytes)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv).map_err(ServiceError::pipeline)?;
    store.put(store::PAD_TABLE_CSV, &csv)?;
    let mut log = Vec::new();
    table.write_imputation_log_csv(&mut log).map_err(ServiceError::pipeline)?;
    store.put(store::IMPUTATION_LOG, &log)?;
    let mut corr = Vec::new();
    table.write_corrections_csv(&mut corr).map_err(ServiceError::pipeline)?;
    store.put(store::CORRECTIONS, &corr)?;
    Ok(IngestSummary {
        store: store.root().to_path_buf(),
        pad_table_hash: sha256_hex(&bytes),
        date_min: table.date_min,
        date_max: table.date_max,
        n_days: table.n_days(),
        n_wells: table.wells.len(),
        n_rows: table.rows().len(),
        corrections: table.corrections.len(),
        imputed_cells: table.imputation_log.len(),
    })
}

pub fn load_table(store: &Store) -> Result<PadTable> {
    store.get_json(store::PAD_TABLE, "run `ingest` first")
}

/// What `train` records next to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model_hash: String,
    pub config: ForecastConfig,
    pub best_params: GbtParams,
    pub best_mean_rmse: f64,
    pub split: SplitDates,
    pub grid_rows: usize,
    pub n_features: usize,
}

pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    let store = Store::open(cfg);
    let table = load_table(&store)?;
    let out = train_pipeline(&table, &cfg.train).map_err(ServiceError::pipeline)?;
    let model_json = out.model.to_json();
    let model_hash = sha256_hex(model_json.as_bytes());
    store.put(store::MODEL, model_json.as_bytes())?;
    let mut cv = Vec::new();
    out.search.write_csv(&mut cv).map_err(ServiceError::pipeline)?;
    store.put(store::CV_TABLE, &cv)?;
    store.put_json(store::FEATURE_SPEC, &out.model.feature_names)?;
    let summary = TrainSummary {
        model_hash,
        config: out.config,
        best_params: out.search.best_params.clone(),
        best_mean_rmse: out.search.rows[out.search.best_index].mean_rmse,
        split: out.split,
        grid_rows: out.search.rows.len(),
        n_features: out.model.n_features(),
    };
    store.put_json(store::TRAIN_SUMMARY, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub model_hash: String,
    pub metrics: steamflood_core::eval::MetricsSummary,
    pub band_coverage: f64,
    pub n_months: usize,
    pub metrics_path: PathBuf,
    pub monthly_path: PathBuf,
}

pub fn evaluate(cfg: &RunConfig) -> Result<EvaluateSummary> {
    let engine = crate::engine::Engine::load(cfg)?;
    let report: &EvaluationReport = engine.evaluation()?;
    let store = engine.store();
    let metrics_path = store.put_json(store::METRICS, &report.metrics)?;
    let mut csv = Vec::new();
    steamflood_core::eval::write_monthly_csv(&report.monthly, &mut csv).map_err(ServiceError::pipeline)?;
    let monthly_path = store.put(store::MONTHLY_CSV, &csv)?;
    store.put_json(store::MONTHLY_JSON, &report.monthly)?;
    Ok(EvaluateSummary {
        model_hash: engine.model_hash().to_string(),
        metrics: report.metrics,
        band_coverage: band_coverage(&report.monthly),
        n_months: report.monthly.len(),
        metrics_path,
        monthly_path,
    })
}

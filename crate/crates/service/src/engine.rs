//! Read-only inference over one trained model. The CLI and every HTTP route
//! go through these methods, so both produce the same payloads.

use std::sync::OnceLock;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use steamflood_core::eval::MONTHLY_BAND;
use steamflood_core::features::{FeatureBuilder, ForecastConfig};
use steamflood_core::gbt::{importance, GbtModel, ImportanceEntry};
use steamflood_core::ingest::PadTable;
use steamflood_core::optimize::{
    current_fractions, current_total_steam, heatmap, optimize, validate_fractions, HeatmapGrid, OptimizeError,
    OptimizeRequest, OptimizeResult, PlanEvaluator,
};
use steamflood_core::workflow::{band_coverage, evaluate_pipeline, EvaluationReport, SplitDates};

use crate::config::{sha256_hex, RunConfig};
use crate::error::{Result, ServiceError};
use crate::pipeline::{load_table, TrainSummary};
use crate::store::{self, Store};

pub struct Engine {
    config: RunConfig,
    store: Store,
    table: PadTable,
    model: GbtModel,
    model_hash: String,
    forecast: ForecastConfig,
    split: SplitDates,
    builder: FeatureBuilder,
    evaluation: OnceLock<EvaluationReport>,
}

/// Body of `POST /whatif`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub fractions: Vec<f64>,
    #[serde(default)]
    pub total_steam: Option<f64>,
}

/// Body of `POST /forecast`. The default horizon is used when `horizon_dates` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    #[serde(default)]
    pub horizon_dates: Option<Vec<NaiveDate>>,
    pub plan: WhatIfRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceResponse {
    pub model_hash: String,
    pub top: usize,
    pub entries: Vec<ImportanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub model_hash: String,
    pub wells: Vec<String>,
    pub fractions: Vec<f64>,
    pub total_steam: f64,
    pub horizon: Horizon,
    pub predicted_total: f64,
    pub reference_fractions: Vec<f64>,
    pub reference_predicted: f64,
    /// `predicted_total / reference_predicted - 1`.
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub date: NaiveDate,
    pub well: String,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub model_hash: String,
    pub wells: Vec<String>,
    pub fractions: Vec<f64>,
    pub total_steam: f64,
    pub predictions: Vec<ForecastRow>,
    pub predicted_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResponse {
    pub model_hash: String,
    pub horizon: Horizon,
    #[serde(flatten)]
    pub result: OptimizeResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapResponse {
    pub model_hash: String,
    pub horizon: Horizon,
    #[serde(flatten)]
    pub grid: HeatmapGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyResponse {
    pub model_hash: String,
    pub band: f64,
    pub coverage: f64,
    pub rows: Vec<steamflood_core::eval::MonthlyRow>,
}

fn invalid(e: OptimizeError) -> ServiceError {
    match e {
        OptimizeError::Feature(_) | OptimizeError::SpecMismatch => ServiceError::pipeline(e),
        other => ServiceError::InvalidInput(other.to_string()),
    }
}

impl Engine {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let store = Store::open(cfg);
        let table = load_table(&store)?;
        let model_bytes = store.get(store::MODEL, "run `train` first")?;
        let model_hash = sha256_hex(&model_bytes);
        let text = String::from_utf8(model_bytes).map_err(ServiceError::pipeline)?;
        let model = GbtModel::from_json(&text).map_err(ServiceError::pipeline)?;
        let summary: TrainSummary = store.get_json(store::TRAIN_SUMMARY, "run `train` first")?;
        if summary.model_hash != model_hash {
            return Err(ServiceError::Pipeline("model.json does not match train_summary.json".into()));
        }
        let builder = FeatureBuilder::from_table(&table, summary.config).map_err(ServiceError::pipeline)?;
        if builder.spec().names != model.feature_names {
            return Err(ServiceError::Pipeline("model features do not match the pad table".into()));
        }
        Ok(Self {
            config: cfg.clone(),
            store,
            table,
            model,
            model_hash,
            forecast: summary.config,
            split: summary.split,
            builder,
            evaluation: OnceLock::new(),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn model(&self) -> &GbtModel {
        &self.model
    }

    pub fn table(&self) -> &PadTable {
        &self.table
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        self.forecast
    }

    pub fn infill_wells(&self) -> &[String] {
        &self.builder.spec().infill_wells
    }

    pub fn default_step(&self) -> f64 {
        self.config.optimizer.step
    }

    /// Default planning horizon: `horizon_days` dates starting `lead` days after the data ends.
    pub fn horizon_dates(&self) -> Vec<NaiveDate> {
        OptimizeRequest::horizon(
            self.table.date_max,
            self.config.horizon_lead(self.forecast.t),
            self.config.optimizer.horizon_days,
        )
    }

    fn horizon_of(dates: &[NaiveDate]) -> Horizon {
        Horizon {
            start: dates[0],
            end: *dates.last().expect("non-empty horizon"),
            days: dates.len(),
        }
    }

    pub fn total_steam(&self) -> Result<f64> {
        match self.config.optimizer.total_steam {
            Some(t) => Ok(t),
            None => current_total_steam(self.builder.steam()).map_err(invalid),
        }
    }

    fn request(&self, step: f64, dates: Vec<NaiveDate>, total_steam: f64) -> OptimizeRequest {
        OptimizeRequest {
            step,
            horizon_dates: dates,
            total_steam,
            objective: Default::default(),
        }
    }

    fn evaluator(&self, req: &OptimizeRequest) -> Result<PlanEvaluator<'_>> {
        PlanEvaluator::with_builder(&self.model, self.builder.clone(), req).map_err(invalid)
    }

    /// Latest historical allocation on the `step` grid.
    pub fn current_plan(&self, step: f64) -> Result<Vec<f64>> {
        current_fractions(self.builder.steam(), step).map_err(invalid)
    }

    pub fn importance(&self, top: usize) -> Result<ImportanceResponse> {
        let report = importance(&self.model, top).map_err(ServiceError::pipeline)?;
        Ok(ImportanceResponse {
            model_hash: self.model_hash.clone(),
            top,
            entries: report.entries,
        })
    }

    fn plan_total(&self, total_steam: Option<f64>) -> Result<f64> {
        match total_steam {
            Some(t) if t.is_finite() && t > 0.0 => Ok(t),
            Some(t) => Err(ServiceError::InvalidInput(format!("total_steam must be positive, got {t}"))),
            None => self.total_steam(),
        }
    }

    pub fn whatif(&self, req: &WhatIfRequest) -> Result<WhatIfResponse> {
        let fractions = &req.fractions[..];
        validate_fractions(fractions, self.infill_wells().len()).map_err(invalid)?;
        let total = self.plan_total(req.total_steam)?;
        let dates = self.horizon_dates();
        let req = self.request(self.default_step(), dates.clone(), total);
        let eval = self.evaluator(&req)?;
        let reference = self.current_plan(self.default_step())?;
        let predicted_total = eval.evaluate(fractions).map_err(invalid)?;
        let reference_predicted = eval.evaluate(&reference).map_err(invalid)?;
        Ok(WhatIfResponse {
            model_hash: self.model_hash.clone(),
            wells: self.infill_wells().to_vec(),
            fractions: fractions.to_vec(),
            total_steam: total,
            horizon: Self::horizon_of(&dates),
            predicted_total,
            reference_fractions: reference,
            reference_predicted,
            improvement: predicted_total / reference_predicted - 1.0,
        })
    }

    pub fn forecast(&self, req: &ForecastRequest) -> Result<ForecastResponse> {
        let fractions = &req.plan.fractions[..];
        validate_fractions(fractions, self.infill_wells().len()).map_err(invalid)?;
        let dates = req.horizon_dates.clone().unwrap_or_else(|| self.horizon_dates());
        if dates.is_empty() {
            return Err(ServiceError::InvalidInput("horizon_dates must not be empty".into()));
        }
        let total = self.plan_total(req.plan.total_steam)?;
        let req = self.request(self.default_step(), dates, total);
        let eval = self.evaluator(&req)?;
        let rows = eval.predictions(fractions).map_err(invalid)?;
        let predicted_total = rows.iter().map(|(_, p)| p).sum();
        Ok(ForecastResponse {
            model_hash: self.model_hash.clone(),
            wells: self.infill_wells().to_vec(),
            fractions: fractions.to_vec(),
            total_steam: total,
            predictions: rows
                .into_iter()
                .map(|(k, predicted)| ForecastRow {
                    date: k.date,
                    well: k.well,
                    predicted,
                })
                .collect(),
            predicted_total,
        })
    }

    pub fn optimize(&self, step: f64) -> Result<OptimizeResponse> {
        let dates = self.horizon_dates();
        let total = self.total_steam()?;
        let req = self.request(step, dates.clone(), total);
        let eval = self.evaluator(&req)?;
        let reference = self.current_plan(step)?;
        let result = optimize(&eval, self.infill_wells(), total, step, &reference).map_err(invalid)?;
        Ok(OptimizeResponse {
            model_hash: self.model_hash.clone(),
            horizon: Self::horizon_of(&dates),
            result,
        })
    }

    pub fn heatmap(&self, i: usize, j: usize, step: f64) -> Result<HeatmapResponse> {
        let dates = self.horizon_dates();
        let total = self.total_steam()?;
        let req = self.request(step, dates.clone(), total);
        let eval = self.evaluator(&req)?;
        let reference = self.current_plan(step)?;
        let grid = heatmap(&eval, self.infill_wells(), step, (i, j), &reference).map_err(invalid)?;
        Ok(HeatmapResponse {
            model_hash: self.model_hash.clone(),
            horizon: Self::horizon_of(&dates),
            grid,
        })
    }

    /// Train/test metrics and the monthly report, computed once per engine.
    pub fn evaluation(&self) -> Result<&EvaluationReport> {
        if let Some(r) = self.evaluation.get() {
            return Ok(r);
        }
        let report = evaluate_pipeline(&self.table, &self.model, self.forecast, &self.split).map_err(ServiceError::pipeline)?;
        Ok(self.evaluation.get_or_init(|| report))
    }

    pub fn monthly(&self) -> Result<MonthlyResponse> {
        let report = self.evaluation()?;
        Ok(MonthlyResponse {
            model_hash: self.model_hash.clone(),
            band: MONTHLY_BAND,
            coverage: band_coverage(&report.monthly),
            rows: report.monthly.clone(),
        })
    }
}

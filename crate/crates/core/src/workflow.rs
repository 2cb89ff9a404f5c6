//! End-to-end training and evaluation on an imputed pad table.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{
    self, grid_search, holdout_cut, monthly_report, time_series_folds, CvPlan, EvalError, GridSearchResult, MetricsSummary,
    MonthlyRow, ParamGrid, SplitMetrics,
};
use crate::features::{FeatureBuilder, FeatureError, FeatureMatrix, ForecastConfig};
use crate::gbt::{self, baseline_predict, GbtError, GbtModel};
use crate::ingest::PadTable;

#[derive(Debug, Error, PartialEq)]
pub enum WorkflowError {
    #[error("k grid is empty")]
    EmptyKGrid,
    #[error("no baseline prediction is available for the {0} split")]
    NoBaselineRows(&'static str),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gbt(#[from] GbtError),
}

pub type Result<T, E = WorkflowError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub t: usize,
    pub k_grid: Vec<usize>,
    pub include_oil_lags: bool,
    pub train_frac: f64,
    pub n_folds: usize,
    pub grid: ParamGrid,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            t: 30,
            k_grid: vec![7, 14, 30],
            include_oil_lags: false,
            train_frac: 0.8,
            n_folds: 5,
            grid: ParamGrid::default(),
        }
    }
}

/// Target-date window shared by every candidate `k` and the holdout cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDates {
    /// First target date with a full history for the largest `k`.
    pub first_target: NaiveDate,
    /// Last training target date.
    pub train_end: NaiveDate,
}

impl SplitDates {
    pub fn is_train(&self, d: NaiveDate) -> bool {
        d >= self.first_target && d <= self.train_end
    }

    pub fn is_test(&self, d: NaiveDate) -> bool {
        d > self.train_end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: GbtModel,
    pub config: ForecastConfig,
    pub split: SplitDates,
    pub plan: CvPlan,
    pub search: GridSearchResult,
}

/// Holdout split, CV plan over the training dates, grid search, then a final
/// fit of the winner on all training rows.
pub fn train_pipeline(table: &PadTable, settings: &TrainSettings) -> Result<TrainOutcome> {
    let k_max = *settings.k_grid.iter().max().ok_or(WorkflowError::EmptyKGrid)?;
    let widest = ForecastConfig {
        t: settings.t,
        k: k_max,
        include_oil_lags: settings.include_oil_lags,
    };
    widest.validate()?;
    let dates = FeatureBuilder::from_table(table, widest)?.build()?.distinct_dates();
    let split = SplitDates {
        first_target: dates[0],
        train_end: holdout_cut(&dates, settings.train_frac)?,
    };
    let train_dates: Vec<NaiveDate> = dates.iter().copied().filter(|d| split.is_train(*d)).collect();
    let plan = time_series_folds(&train_dates, settings.n_folds)?;
    let search = grid_search(
        table,
        &settings.grid,
        &settings.k_grid,
        settings.t,
        settings.include_oil_lags,
        &plan,
    )?;
    let config = search.best_config;
    let train = FeatureBuilder::from_table(table, config)?
        .build()?
        .filter_dates(|d| split.is_train(d));
    let model = gbt::train_matrix(&train, &search.best_params)?;
    Ok(TrainOutcome {
        model,
        config,
        split,
        plan,
        search,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metrics: MetricsSummary,
    pub monthly: Vec<MonthlyRow>,
    pub n_train_rows: usize,
    pub n_test_rows: usize,
    /// Rows left out of the metrics because `oil(D - t)` was not observed.
    pub baseline_skipped: usize,
}

fn score_split(
    table: &PadTable,
    model: &GbtModel,
    matrix: &FeatureMatrix,
    t: usize,
    name: &'static str,
) -> Result<(SplitMetrics, Vec<f64>, usize)> {
    let predicted = model.predict(&matrix.x)?;
    let baseline = baseline_predict(table, t, &matrix.keys)?;
    let (mut y, mut m, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for ((actual, p), base) in matrix.y.iter().zip(&predicted).zip(&baseline.predictions) {
        if let Some(base) = base {
            y.push(*actual);
            m.push(*p);
            b.push(*base);
        }
    }
    if y.is_empty() {
        return Err(WorkflowError::NoBaselineRows(name));
    }
    Ok((SplitMetrics::compute(&y, &m, &b)?, predicted, baseline.skipped.len()))
}

/// Model and copy-forward baseline accuracy on both splits (scored on rows
/// where the baseline exists) plus the monthly report over the test split.
pub fn evaluate_pipeline(table: &PadTable, model: &GbtModel, config: ForecastConfig, split: &SplitDates) -> Result<EvaluationReport> {
    let matrix = FeatureBuilder::from_table(table, config)?.build()?;
    let train = matrix.filter_dates(|d| split.is_train(d));
    let test = matrix.filter_dates(|d| split.is_test(d));
    let (train_metrics, _, skipped_train) = score_split(table, model, &train, config.t, "train")?;
    let (test_metrics, test_pred, skipped_test) = score_split(table, model, &test, config.t, "test")?;
    let monthly = monthly_report(&test_pred, &test.y, &test.keys)?;
    Ok(EvaluationReport {
        metrics: MetricsSummary {
            train: train_metrics,
            test: test_metrics,
        },
        monthly,
        n_train_rows: train.n_rows(),
        n_test_rows: test.n_rows(),
        baseline_skipped: skipped_train + skipped_test,
    })
}

/// Share of monthly rows inside the ±10% band (months with zero actual count as misses).
pub fn band_coverage(monthly: &[MonthlyRow]) -> f64 {
    if monthly.is_empty() {
        return 0.0;
    }
    monthly.iter().filter(|r| r.within_band).count() as f64 / monthly.len() as f64
}

pub use eval::MONTHLY_BAND;

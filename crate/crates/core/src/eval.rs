//! Temporal holdout, expanding-window CV, grid search and accuracy reports.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureBuilder, FeatureError, FeatureMatrix, ForecastConfig, RowKey};
use crate::gbt::{self, GbtError, GbtParams};
use crate::ingest::PadTable;

/// Relative error band of the monthly report.
pub const MONTHLY_BAND: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty set")]
    Empty,
    #[error("R^2 undefined: targets have zero variance")]
    DegenerateVariance,
    #[error("need at least {needed} distinct dates, have {have}")]
    TooFewDates { needed: usize, have: usize },
    #[error("train fraction must be in (0, 1) and leave a non-empty test set, got {0}")]
    InvalidFraction(f64),
    #[error("n_folds must be at least 1")]
    NoFolds,
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
    #[error("fold {fold} has no {part} rows for k = {k}")]
    EmptyFold { fold: usize, part: &'static str, k: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gbt(#[from] GbtError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Coefficient of determination against the mean of `y`.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if y.iter().all(|v| *v == y[0]) || sst == 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub r2: f64,
}

impl Metrics {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(y, yhat)?,
            r2: r2(y, yhat)?,
        })
    }
}

/// Chronological split by target date: the earliest `ceil(frac * n)` distinct
/// dates train, the rest test.
pub fn holdout_split(matrix: &FeatureMatrix, train_frac: f64) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let dates = matrix.distinct_dates();
    let cut = holdout_cut(&dates, train_frac)?;
    Ok((matrix.filter_dates(|d| d <= cut), matrix.filter_dates(|d| d > cut)))
}

/// Last training date of the holdout split over sorted distinct `dates`.
pub fn holdout_cut(dates: &[NaiveDate], train_frac: f64) -> Result<NaiveDate> {
    if dates.len() < 2 {
        return Err(EvalError::TooFewDates {
            needed: 2,
            have: dates.len(),
        });
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(EvalError::InvalidFraction(train_frac));
    }
    // Guard against 0.8 * 35 = 28.000000000000004 rounding up to 29.
    let n_train = ((train_frac * dates.len() as f64) - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= dates.len() {
        return Err(EvalError::InvalidFraction(train_frac));
    }
    Ok(dates[n_train - 1])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub valid_start: NaiveDate,
    pub valid_end: NaiveDate,
}

impl Fold {
    pub fn is_train(&self, d: NaiveDate) -> bool {
        d >= self.train_start && d <= self.train_end
    }

    pub fn is_valid(&self, d: NaiveDate) -> bool {
        d >= self.valid_start && d <= self.valid_end
    }
}

/// Expanding-window time-series cross-validation plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub n_folds: usize,
    pub folds: Vec<Fold>,
}

impl CvPlan {
    pub fn span(&self) -> (NaiveDate, NaiveDate) {
        let first = self.folds.first().expect("plan has folds");
        let last = self.folds.last().expect("plan has folds");
        (first.train_start, last.valid_end)
    }
}

/// Splits `dates` into `n_folds + 1` contiguous blocks; fold `i` trains on
/// blocks `1..=i` and validates on block `i + 1`.
pub fn time_series_folds(dates: &[NaiveDate], n_folds: usize) -> Result<CvPlan> {
    if n_folds == 0 {
        return Err(EvalError::NoFolds);
    }
    let n = dates.len();
    let blocks = n_folds + 1;
    if n < blocks {
        return Err(EvalError::TooFewDates { needed: blocks, have: n });
    }
    let bound = |b: usize| b * n / blocks;
    let folds = (1..=n_folds)
        .map(|i| Fold {
            train_start: dates[0],
            train_end: dates[bound(i) - 1],
            valid_start: dates[bound(i)],
            valid_end: dates[bound(i + 1) - 1],
        })
        .collect();
    Ok(CvPlan { n_folds, folds })
}

/// Hyperparameter grid. Combinations are enumerated with `n_trees` outermost
/// and `subsample` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub min_child_weight: Vec<f64>,
    pub subsample: Vec<f64>,
    pub seed: u64,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            n_trees: vec![100, 300],
            max_depth: vec![3, 5, 7],
            learning_rate: vec![0.05, 0.1],
            lambda: vec![1.0],
            gamma: vec![0.0],
            min_child_weight: vec![1.0],
            subsample: vec![0.8, 1.0],
            seed: 0,
        }
    }
}

impl ParamGrid {
    pub fn single(p: &GbtParams) -> Self {
        Self {
            n_trees: vec![p.n_trees],
            max_depth: vec![p.max_depth],
            learning_rate: vec![p.learning_rate],
            lambda: vec![p.lambda],
            gamma: vec![p.gamma],
            min_child_weight: vec![p.min_child_weight],
            subsample: vec![p.subsample],
            seed: p.seed,
        }
    }

    pub fn combinations(&self) -> Result<Vec<GbtParams>> {
        let named: [(&'static str, usize); 7] = [
            ("n_trees", self.n_trees.len()),
            ("max_depth", self.max_depth.len()),
            ("learning_rate", self.learning_rate.len()),
            ("lambda", self.lambda.len()),
            ("gamma", self.gamma.len()),
            ("min_child_weight", self.min_child_weight.len()),
            ("subsample", self.subsample.len()),
        ];
        if let Some((name, _)) = named.iter().find(|(_, n)| *n == 0) {
            return Err(EvalError::EmptyGrid(name));
        }
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &learning_rate in &self.learning_rate {
                    for &lambda in &self.lambda {
                        for &gamma in &self.gamma {
                            for &min_child_weight in &self.min_child_weight {
                                for &subsample in &self.subsample {
                                    let p = GbtParams {
                                        n_trees,
                                        max_depth,
                                        learning_rate,
                                        lambda,
                                        gamma,
                                        min_child_weight,
                                        subsample,
                                        seed: self.seed,
                                    };
                                    p.validate()?;
                                    out.push(p);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: GbtParams,
    pub k: usize,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub rows: Vec<GridRow>,
    pub best_index: usize,
    pub best_params: GbtParams,
    pub best_config: ForecastConfig,
}

impl GridSearchResult {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n_folds = self.rows.first().map_or(0, |r| r.fold_rmse.len());
        let mut header: Vec<String> = [
            "k",
            "n_trees",
            "max_depth",
            "learning_rate",
            "lambda",
            "gamma",
            "min_child_weight",
            "subsample",
            "seed",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=n_folds).map(|i| format!("fold{i}_rmse")));
        header.push("mean_rmse".into());
        header.push("best".into());
        w.write_record(&header)?;
        for (i, r) in self.rows.iter().enumerate() {
            let p = &r.params;
            let mut line = vec![
                r.k.to_string(),
                p.n_trees.to_string(),
                p.max_depth.to_string(),
                p.learning_rate.to_string(),
                p.lambda.to_string(),
                p.gamma.to_string(),
                p.min_child_weight.to_string(),
                p.subsample.to_string(),
                p.seed.to_string(),
            ];
            line.extend(r.fold_rmse.iter().map(f64::to_string));
            line.push(r.mean_rmse.to_string());
            line.push((i == self.best_index).to_string());
            w.write_record(&line)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fold_indices(m: &FeatureMatrix, pred: impl Fn(NaiveDate) -> bool) -> Vec<usize> {
    (0..m.n_rows()).filter(|&i| pred(m.keys[i].date)).collect()
}

fn cv_score(matrix: &FeatureMatrix, plan: &CvPlan, params: &GbtParams, k: usize) -> Result<Vec<f64>> {
    plan.folds
        .iter()
        .enumerate()
        .map(|(i, fold)| {
            let train_idx = fold_indices(matrix, |d| fold.is_train(d));
            let valid_idx = fold_indices(matrix, |d| fold.is_valid(d));
            if train_idx.is_empty() {
                return Err(EvalError::EmptyFold { fold: i + 1, part: "train", k });
            }
            if valid_idx.is_empty() {
                return Err(EvalError::EmptyFold { fold: i + 1, part: "validation", k });
            }
            let train = matrix.select_rows(&train_idx);
            let valid = matrix.select_rows(&valid_idx);
            let model = gbt::train_matrix(&train, params)?;
            rmse(&valid.y, &model.predict(&valid.x)?)
        })
        .collect()
}

/// Evaluates every (params, k) combination with the CV plan. Matrices are
/// rebuilt per k; only target dates inside the plan's span are used, so every
/// k sees the same train and validation targets.
pub fn grid_search(
    table: &PadTable,
    grid: &ParamGrid,
    k_grid: &[usize],
    t: usize,
    include_oil_lags: bool,
    plan: &CvPlan,
) -> Result<GridSearchResult> {
    if k_grid.is_empty() {
        return Err(EvalError::EmptyGrid("k"));
    }
    let combos = grid.combinations()?;
    let (span_start, span_end) = plan.span();
    let matrices: Vec<FeatureMatrix> = k_grid
        .par_iter()
        .map(|&k| {
            let cfg = ForecastConfig { t, k, include_oil_lags };
            cfg.validate()?;
            let m = FeatureBuilder::from_table(table, cfg)?.build()?;
            Ok(m.filter_dates(|d| d >= span_start && d <= span_end))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, &GbtParams)> = combos
        .iter()
        .flat_map(|p| (0..k_grid.len()).map(move |ki| (ki, p)))
        .collect();
    let rows: Vec<GridRow> = jobs
        .par_iter()
        .map(|&(ki, params)| {
            let fold_rmse = cv_score(&matrices[ki], plan, params, k_grid[ki])?;
            let mean_rmse = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
            Ok(GridRow {
                params: params.clone(),
                k: k_grid[ki],
                fold_rmse,
                mean_rmse,
            })
        })
        .collect::<Result<_>>()?;

    let best_index = best_row(&rows);
    let best = &rows[best_index];
    Ok(GridSearchResult {
        best_params: best.params.clone(),
        best_config: ForecastConfig {
            t,
            k: best.k,
            include_oil_lags,
        },
        best_index,
        rows,
    })
}

/// Minimal mean RMSE; ties go to fewer trees, then shallower, then smaller k,
/// then grid order.
fn best_row(rows: &[GridRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        let key = |r: &GridRow| (r.params.n_trees, r.params.max_depth, r.k);
        let better = match r.mean_rmse.total_cmp(&b.mean_rmse) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => key(r) < key(b),
            std::cmp::Ordering::Greater => false,
        };
        if better {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRow {
    pub month: String,
    pub actual: f64,
    pub predicted: f64,
    /// `(predicted - actual) / actual`; absent when the month's actual is zero.
    pub rel_error: Option<f64>,
    pub within_band: bool,
    pub zero_actual: bool,
}

/// Sums daily per-well values by calendar month over all wells.
pub fn monthly_report(predicted: &[f64], actual: &[f64], keys: &[RowKey]) -> Result<Vec<MonthlyRow>> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), actual.len()));
    }
    if keys.len() != actual.len() {
        return Err(EvalError::LengthMismatch(keys.len(), actual.len()));
    }
    let mut sums: BTreeMap<YearMonth, (f64, f64)> = BTreeMap::new();
    for ((key, a), p) in keys.iter().zip(actual).zip(predicted) {
        let ym = YearMonth {
            year: key.date.year(),
            month: key.date.month(),
        };
        let e = sums.entry(ym).or_default();
        e.0 += a;
        e.1 += p;
    }
    Ok(sums
        .into_iter()
        .map(|(ym, (actual, predicted))| {
            let zero_actual = actual == 0.0;
            let rel_error = (!zero_actual).then(|| (predicted - actual) / actual);
            MonthlyRow {
                month: ym.to_string(),
                actual,
                predicted,
                rel_error,
                within_band: rel_error.is_some_and(|r| r.abs() <= MONTHLY_BAND),
                zero_actual,
            }
        })
        .collect())
}

pub fn write_monthly_csv<W: std::io::Write>(rows: &[MonthlyRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "actual", "predicted", "rel_error", "within_band", "zero_actual"])?;
    for r in rows {
        w.write_record([
            r.month.clone(),
            r.actual.to_string(),
            r.predicted.to_string(),
            r.rel_error.map(|v| v.to_string()).unwrap_or_default(),
            r.within_band.to_string(),
            r.zero_actual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelVsBaseline {
    pub model: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub rmse: ModelVsBaseline,
    pub r2: ModelVsBaseline,
}

/// Train/test accuracy of the model against the copy-forward baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub train: SplitMetrics,
    pub test: SplitMetrics,
}

impl SplitMetrics {
    pub fn compute(y: &[f64], model: &[f64], baseline: &[f64]) -> Result<Self> {
        let m = Metrics::compute(y, model)?;
        let b = Metrics::compute(y, baseline)?;
        Ok(Self {
            rmse: ModelVsBaseline {
                model: m.rmse,
                baseline: b.rmse,
            },
            r2: ModelVsBaseline {
                model: m.r2,
                baseline: b.r2,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect()
    }

    #[test]
    fn perfect_fit() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let y = [1.0, 2.0, 6.0];
        let m = [3.0, 3.0, 3.0];
        assert!(r2(&y, &m).unwrap().abs() < 1e-15);
    }

    #[test]
    fn rmse_direct_formula() {
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.53553).abs() < 1e-5);
    }

    #[test]
    fn metric_errors() {
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]).unwrap_err(), EvalError::LengthMismatch(1, 2));
        assert_eq!(rmse(&[], &[]).unwrap_err(), EvalError::Empty);
        assert_eq!(r2(&[2.0, 2.0], &[1.0, 2.0]).unwrap_err(), EvalError::DegenerateVariance);
    }

    #[test]
    fn holdout_cut_by_dates() {
        let ds = dates(100);
        assert_eq!(holdout_cut(&ds, 0.8).unwrap(), ds[79]);
        assert_eq!(holdout_cut(&ds[..35], 0.8).unwrap(), ds[27]);
        assert_eq!(holdout_cut(&ds, 1.0).unwrap_err(), EvalError::InvalidFraction(1.0));
        assert_eq!(holdout_cut(&ds, 0.0).unwrap_err(), EvalError::InvalidFraction(0.0));
        assert!(matches!(holdout_cut(&ds[..1], 0.5), Err(EvalError::TooFewDates { .. })));
    }

    #[test]
    fn twelve_dates_five_folds() {
        let ds = dates(12);
        let plan = time_series_folds(&ds, 5).unwrap();
        assert_eq!(plan.folds.len(), 5);
        let f1 = &plan.folds[0];
        assert_eq!((f1.train_start, f1.train_end, f1.valid_start, f1.valid_end), (ds[0], ds[1], ds[2], ds[3]));
        let f5 = &plan.folds[4];
        assert_eq!((f5.train_start, f5.train_end, f5.valid_start, f5.valid_end), (ds[0], ds[9], ds[10], ds[11]));
    }

    #[test]
    fn single_fold_plan() {
        let ds = dates(7);
        let plan = time_series_folds(&ds, 1).unwrap();
        assert_eq!(plan.folds.len(), 1);
        assert_eq!(plan.folds[0].train_end, ds[2]);
        assert_eq!(plan.folds[0].valid_start, ds[3]);
        assert_eq!(plan.folds[0].valid_end, ds[6]);
    }

    #[test]
    fn fold_errors() {
        assert_eq!(time_series_folds(&dates(5), 0).unwrap_err(), EvalError::NoFolds);
        assert_eq!(
            time_series_folds(&dates(5), 5).unwrap_err(),
            EvalError::TooFewDates { needed: 6, have: 5 }
        );
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(ParamGrid::default().combinations().unwrap().len(), 24);
        let mut g = ParamGrid::default();
        g.lambda.clear();
        assert_eq!(g.combinations().unwrap_err(), EvalError::EmptyGrid("lambda"));
    }

    #[test]
    fn best_row_tie_break() {
        let row = |n_trees, max_depth, k, mean_rmse| GridRow {
            params: GbtParams {
                n_trees,
                max_depth,
                ..Default::default()
            },
            k,
            fold_rmse: vec![mean_rmse],
            mean_rmse,
        };
        let rows = vec![row(300, 3, 7, 1.0), row(100, 5, 30, 1.0), row(100, 5, 14, 1.0), row(100, 3, 7, 2.0)];
        assert_eq!(best_row(&rows), 2);
        let rows = vec![row(300, 3, 7, 1.0), row(100, 3, 7, 0.5)];
        assert_eq!(best_row(&rows), 1);
    }

    fn key(y: i32, m: u32, d: u32, w: &str) -> RowKey {
        RowKey {
            date: NaiveDate::from_ymd_opt(y, m, d).unwrap(),
            well: w.to_string(),
        }
    }

    #[test]
    fn single_month_report() {
        let keys = [key(2019, 4, 1, "A"), key(2019, 4, 2, "B")];
        let rows = monthly_report(&[2000.0, 2242.0], &[2000.0, 2202.0], &keys).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].month, "2019-04");
        assert_eq!(rows[0].actual, 4202.0);
        assert_eq!(rows[0].predicted, 4242.0);
        assert!((rows[0].rel_error.unwrap() - 0.0095).abs() < 1e-4);
        assert!(rows[0].within_band);
    }

    #[test]
    fn exact_predictions_have_zero_error() {
        let keys = [key(2019, 4, 1, "A"), key(2019, 5, 1, "A"), key(2019, 6, 1, "A")];
        let a = [3.0, 4.0, 5.0];
        for r in monthly_report(&a, &a, &keys).unwrap() {
            assert_eq!(r.rel_error, Some(0.0));
            assert!(r.within_band);
        }
    }

    #[test]
    fn zero_actual_month_is_flagged_not_dropped() {
        let keys = [key(2019, 4, 1, "A"), key(2019, 5, 1, "A")];
        let rows = monthly_report(&[1.0, 5.0], &[0.0, 5.0], &keys).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].zero_actual);
        assert_eq!(rows[0].rel_error, None);
        assert!(!rows[0].within_band);
        assert!(!rows[1].zero_actual);
    }

    #[test]
    fn band_edges() {
        let keys = [key(2019, 4, 1, "A"), key(2019, 5, 1, "A")];
        let rows = monthly_report(&[109.0, 112.0], &[100.0, 100.0], &keys).unwrap();
        assert!(rows[0].within_band);
        assert!(!rows[1].within_band);
    }
}

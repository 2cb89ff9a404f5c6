//! Exhaustive steam-allocation search over the fraction simplex.
//!
//! A plan splits a fixed daily steam total across the infill wells with
//! fractions on a grid of step `1/N`. Every composition of `N` into `P` parts
//! is scored; the best score wins with ties going to the lexicographically
//! smallest fraction vector (the first one enumerated).

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureBuilder, FeatureError, ForecastConfig, RowKey};
use crate::gbt::GbtModel;
use crate::ingest::PadTable;

/// Tolerance on `sum(fractions) == 1`.
pub const FRACTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("step {0} does not divide 1 into an integral number of parts")]
    StepNotDivisor(f64),
    #[error("need at least one infill well")]
    NoInfillWells,
    #[error("expected {expected} fractions, got {actual}")]
    FractionCount { expected: usize, actual: usize },
    #[error("fractions must be finite and non-negative")]
    NegativeFraction,
    #[error("fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("total steam must be finite and non-negative, got {0}")]
    InvalidTotal(f64),
    #[error("heatmap axes must name two different wells")]
    SameWellTwice,
    #[error("heatmap needs at least two infill wells")]
    TooFewWells,
    #[error("well index {0} out of range")]
    WellOutOfRange(usize),
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error("context is too short: first horizon date needs history back to {needed}, table starts {available}")]
    ContextTooShort { needed: NaiveDate, available: NaiveDate },
    #[error("model features do not match the pad's feature layout")]
    SpecMismatch,
    #[error("context has no day with positive total steam")]
    NoCurrentAllocation,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T, E = OptimizeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximize total predicted oil over the horizon.
    #[default]
    MaxTotalOil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub wells: Vec<String>,
    pub fractions: Vec<f64>,
    pub total_steam: f64,
}

impl AllocationPlan {
    pub fn new(wells: Vec<String>, fractions: Vec<f64>, total_steam: f64) -> Result<Self> {
        validate_fractions(&fractions, wells.len())?;
        if !(total_steam.is_finite() && total_steam >= 0.0) {
            return Err(OptimizeError::InvalidTotal(total_steam));
        }
        Ok(Self {
            wells,
            fractions,
            total_steam,
        })
    }

    /// Daily steam per well.
    pub fn volumes(&self) -> Vec<f64> {
        self.fractions.iter().map(|f| f * self.total_steam).collect()
    }
}

pub fn validate_fractions(fractions: &[f64], n_wells: usize) -> Result<()> {
    if fractions.len() != n_wells {
        return Err(OptimizeError::FractionCount {
            expected: n_wells,
            actual: fractions.len(),
        });
    }
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(OptimizeError::NegativeFraction);
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > FRACTION_TOLERANCE {
        return Err(OptimizeError::FractionSum(sum));
    }
    Ok(())
}

/// Number of grid steps `N = 1/step`, which must be integral.
pub fn grid_steps(step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0 && step <= 1.0) {
        return Err(OptimizeError::StepNotDivisor(step));
    }
    let n = (1.0 / step).round();
    if ((n * step) - 1.0).abs() > 1e-9 {
        return Err(OptimizeError::StepNotDivisor(step));
    }
    Ok(n as usize)
}

/// All compositions of `N = 1/step` into `p` non-negative parts, in
/// lexicographic order of the fraction vectors.
pub fn enumerate_allocations(p: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if p == 0 {
        return Err(OptimizeError::NoInfillWells);
    }
    let n = grid_steps(step)?;
    let mut out = Vec::new();
    let mut counts = vec![0usize; p];
    compositions(&mut counts, 0, n, &mut |c| {
        out.push(c.iter().map(|&k| k as f64 / n as f64).collect());
    });
    Ok(out)
}

fn compositions(counts: &mut [usize], pos: usize, remaining: usize, emit: &mut impl FnMut(&[usize])) {
    if pos == counts.len() - 1 {
        counts[pos] = remaining;
        emit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        compositions(counts, pos + 1, remaining - c, emit);
    }
}

/// Rounds fractions onto the `1/N` grid with largest-remainder rounding.
pub fn snap_to_grid(fractions: &[f64], n: usize) -> Vec<f64> {
    let sum: f64 = fractions.iter().sum();
    let scaled: Vec<f64> = fractions.iter().map(|f| f / sum * n as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
    let short = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Largest remainder first; earlier well wins ties.
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Anything that scores a fraction vector (higher is better).
pub trait PlanScorer: Sync {
    fn score(&self, fractions: &[f64]) -> Result<f64>;
}

impl<F> PlanScorer for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn score(&self, fractions: &[f64]) -> Result<f64> {
        Ok(self(fractions))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRequest {
    pub step: f64,
    /// Contiguous target dates, all after the last context day.
    pub horizon_dates: Vec<NaiveDate>,
    pub total_steam: f64,
    #[serde(default)]
    pub objective: Objective,
}

impl OptimizeRequest {
    /// Horizon of `days` target dates starting `lead` days after `last_day`.
    pub fn horizon(last_day: NaiveDate, lead: usize, days: usize) -> Vec<NaiveDate> {
        (0..days)
            .map(|i| last_day + chrono::Duration::days((lead + i) as i64))
            .collect()
    }
}

/// Scores plans with a trained model over a future horizon.
///
/// Steam on days after the last context day comes from the plan (constant
/// daily allocation); earlier lags come from history. Production-side features
/// past the last context day are frozen at their last observed values.
pub struct PlanEvaluator<'a> {
    model: &'a GbtModel,
    builder: FeatureBuilder,
    horizon_keys: Vec<RowKey>,
    base_rows: Vec<f64>,
    /// (flat cell index, infill well) filled from the plan.
    plan_cells: Vec<(usize, usize)>,
    total_steam: f64,
}

impl<'a> PlanEvaluator<'a> {
    pub fn new(model: &'a GbtModel, context: &PadTable, cfg: ForecastConfig, req: &OptimizeRequest) -> Result<Self> {
        let builder = FeatureBuilder::from_table(context, cfg)?;
        Self::with_builder(model, builder, req)
    }

    pub fn with_builder(model: &'a GbtModel, builder: FeatureBuilder, req: &OptimizeRequest) -> Result<Self> {
        if builder.spec().names != model.feature_names {
            return Err(OptimizeError::SpecMismatch);
        }
        if !(req.total_steam.is_finite() && req.total_steam >= 0.0) {
            return Err(OptimizeError::InvalidTotal(req.total_steam));
        }
        let cfg = builder.spec().config;
        let dates = &req.horizon_dates;
        if dates.len() < cfg.t {
            return Err(OptimizeError::InvalidHorizon(format!(
                "horizon has {} days, need at least t = {}",
                dates.len(),
                cfg.t
            )));
        }
        if dates.windows(2).any(|w| (w[1] - w[0]).num_days() != 1) {
            return Err(OptimizeError::InvalidHorizon("dates must be contiguous and ascending".into()));
        }
        let last_day = builder.n_days() as i64 - 1;
        let first = builder.day_of(dates[0]);
        if first <= last_day {
            return Err(OptimizeError::InvalidHorizon(format!(
                "horizon starts {} but context runs through {}",
                dates[0],
                builder.date_of(last_day)
            )));
        }
        if first - (cfg.max_lag() as i64) < 0 {
            return Err(OptimizeError::ContextTooShort {
                needed: builder.date_of(first - cfg.max_lag() as i64),
                available: builder.date_min(),
            });
        }

        let width = builder.spec().width();
        let n_wells = builder.n_production();
        let mut base_rows = vec![0.0; dates.len() * n_wells * width];
        let mut plan_cells = Vec::new();
        let mut horizon_keys = Vec::with_capacity(dates.len() * n_wells);
        let steam = builder.steam();
        for (h, date) in dates.iter().enumerate() {
            let day = builder.day_of(*date);
            for w in 0..n_wells {
                let r = h * n_wells + w;
                let out = &mut base_rows[r * width..(r + 1) * width];
                builder.write_row(
                    day,
                    w,
                    |d, x| if d <= last_day { steam.get(d as usize, x) } else { f64::NAN },
                    out,
                );
                for m in 1..=cfg.t {
                    if day - m as i64 > last_day {
                        for x in 0..builder.spec().infill_wells.len() {
                            plan_cells.push((r * width + builder.spec().steam_col(m, x), x));
                        }
                    }
                }
                horizon_keys.push(RowKey {
                    date: *date,
                    well: builder.spec().encoding.wells[w].clone(),
                });
            }
        }
        Ok(Self {
            model,
            builder,
            horizon_keys,
            base_rows,
            plan_cells,
            total_steam: req.total_steam,
        })
    }

    pub fn infill_wells(&self) -> &[String] {
        &self.builder.spec().infill_wells
    }

    pub fn total_steam(&self) -> f64 {
        self.total_steam
    }

    pub fn horizon_keys(&self) -> &[RowKey] {
        &self.horizon_keys
    }

    fn rows_for(&self, fractions: &[f64]) -> Result<Vec<f64>> {
        validate_fractions(fractions, self.infill_wells().len())?;
        let mut rows = self.base_rows.clone();
        for &(cell, x) in &self.plan_cells {
            rows[cell] = fractions[x] * self.total_steam;
        }
        Ok(rows)
    }

    /// Per (date, well) predictions under the plan, in horizon order.
    pub fn predictions(&self, fractions: &[f64]) -> Result<Vec<(RowKey, f64)>> {
        let rows = self.rows_for(fractions)?;
        let width = self.model.n_features();
        Ok(self
            .horizon_keys
            .iter()
            .zip(rows.chunks_exact(width))
            .map(|(k, row)| (k.clone(), self.model.predict_row(row)))
            .collect())
    }

    /// Total predicted oil over the horizon and all production wells.
    pub fn evaluate(&self, fractions: &[f64]) -> Result<f64> {
        let rows = self.rows_for(fractions)?;
        let width = self.model.n_features();
        Ok(rows.chunks_exact(width).map(|row| self.model.predict_row(row)).sum())
    }

    /// The latest historical allocation snapped onto the `step` grid.
    pub fn current_fractions(&self, step: f64) -> Result<Vec<f64>> {
        current_fractions(self.builder.steam(), step)
    }
}

impl PlanScorer for PlanEvaluator<'_> {
    fn score(&self, fractions: &[f64]) -> Result<f64> {
        self.evaluate(fractions)
    }
}

/// Fractions of the last day with positive total steam, snapped to the grid.
pub fn current_fractions(steam: &crate::features::SteamWide, step: f64) -> Result<Vec<f64>> {
    let n = grid_steps(step)?;
    let p = steam.n_wells();
    for day in (0..steam.dates.len()).rev() {
        let row: Vec<f64> = (0..p).map(|x| steam.get(day, x)).collect();
        if row.iter().sum::<f64>() > 0.0 {
            return Ok(snap_to_grid(&row, n));
        }
    }
    Err(OptimizeError::NoCurrentAllocation)
}

/// Total daily steam on the last day with any injection.
pub fn current_total_steam(steam: &crate::features::SteamWide) -> Result<f64> {
    let p = steam.n_wells();
    (0..steam.dates.len())
        .rev()
        .map(|day| (0..p).map(|x| steam.get(day, x)).sum::<f64>())
        .find(|t| *t > 0.0)
        .ok_or(OptimizeError::NoCurrentAllocation)
}

/// Plain model-based total for one plan.
pub fn evaluate_plan(
    model: &GbtModel,
    context: &PadTable,
    cfg: ForecastConfig,
    req: &OptimizeRequest,
    plan: &AllocationPlan,
) -> Result<f64> {
    let req = OptimizeRequest {
        total_steam: plan.total_steam,
        ..req.clone()
    };
    let eval = PlanEvaluator::new(model, context, cfg, &req)?;
    if plan.wells != eval.infill_wells() {
        return Err(OptimizeError::FractionCount {
            expected: eval.infill_wells().len(),
            actual: plan.wells.len(),
        });
    }
    eval.evaluate(&plan.fractions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: AllocationPlan,
    pub predicted_total: f64,
    pub reference: AllocationPlan,
    pub reference_predicted: f64,
    /// `predicted_total / reference_predicted - 1`.
    pub improvement: f64,
    pub evaluations: usize,
    pub objective: Objective,
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

fn improvement(best: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if best == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        best / reference - 1.0
    }
}

/// Scores every plan (in parallel) and returns the deterministic argmax.
fn argmax(scorer: &impl PlanScorer, plans: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let scores: Vec<f64> = plans.par_iter().map(|p| scorer.score(p)).collect::<Result<_>>()?;
    let mut best = 0;
    for i in 1..plans.len() {
        let better = scores[i] > scores[best] || (scores[i] == scores[best] && lex_less(&plans[i], &plans[best]));
        if better {
            best = i;
        }
    }
    Ok((best, scores))
}

/// Brute-force search. `reference` must lie on the grid so that the search
/// can never return less than the reference plan.
pub fn optimize(
    scorer: &impl PlanScorer,
    wells: &[String],
    total_steam: f64,
    step: f64,
    reference: &[f64],
) -> Result<OptimizeResult> {
    let plans = enumerate_allocations(wells.len(), step)?;
    let reference_plan = AllocationPlan::new(wells.to_vec(), reference.to_vec(), total_steam)?;
    let (best, scores) = argmax(scorer, &plans)?;
    let reference_predicted = scorer.score(reference)?;
    let predicted_total = scores[best];
    Ok(OptimizeResult {
        best: AllocationPlan::new(wells.to_vec(), plans[best].clone(), total_steam)?,
        predicted_total,
        reference: reference_plan,
        reference_predicted,
        improvement: improvement(predicted_total, reference_predicted),
        evaluations: plans.len(),
        objective: Objective::MaxTotalOil,
    })
}

/// Convenience wrapper: model-based search with the context's current plan as reference.
pub fn optimize_model(model: &GbtModel, context: &PadTable, cfg: ForecastConfig, req: &OptimizeRequest) -> Result<OptimizeResult> {
    let eval = PlanEvaluator::new(model, context, cfg, req)?;
    let reference = eval.current_fractions(req.step)?;
    optimize(&eval, eval.infill_wells(), req.total_steam, req.step, &reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub fraction_i: f64,
    pub fraction_j: f64,
    pub fractions: Vec<f64>,
    pub predicted_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub wells: Vec<String>,
    pub axis: (usize, usize),
    pub axis_wells: (String, String),
    pub step: f64,
    /// How the fraction left over by the two axis wells is split among the others.
    pub residual_policy: String,
    pub residual_weights: Vec<f64>,
    pub cells: Vec<HeatmapCell>,
    /// Cell of the reference (current) plan, when it lies on the slice.
    pub current_cell: Option<usize>,
    pub optimum_cell: usize,
}

impl HeatmapGrid {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fraction_i", "fraction_j", "predicted_total"])?;
        for c in &self.cells {
            w.write_record([c.fraction_i.to_string(), c.fraction_j.to_string(), c.predicted_total.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores a 2-D slice of the simplex with wells `i` and `j` on the axes.
///
/// With three wells the slice is the whole simplex. With more, the residual
/// fraction is split in proportion to the reference plan's fractions on the
/// remaining wells (equally when those are all zero). With two wells only the
/// diagonal `f_i + f_j = 1` exists.
pub fn heatmap(
    scorer: &impl PlanScorer,
    wells: &[String],
    step: f64,
    axis: (usize, usize),
    reference: &[f64],
) -> Result<HeatmapGrid> {
    let p = wells.len();
    let (i, j) = axis;
    if i == j {
        return Err(OptimizeError::SameWellTwice);
    }
    if p < 2 {
        return Err(OptimizeError::TooFewWells);
    }
    if let Some(&bad) = [i, j].iter().find(|&&x| x >= p) {
        return Err(OptimizeError::WellOutOfRange(bad));
    }
    validate_fractions(reference, p)?;
    let n = grid_steps(step)?;

    let residual: Vec<usize> = (0..p).filter(|&x| x != i && x != j).collect();
    let ref_mass: f64 = residual.iter().map(|&x| reference[x]).sum();
    let residual_weights: Vec<f64> = residual
        .iter()
        .map(|&x| {
            if ref_mass > 0.0 {
                reference[x] / ref_mass
            } else {
                1.0 / residual.len() as f64
            }
        })
        .collect();

    let mut plans = Vec::new();
    let mut axes = Vec::new();
    for ci in 0..=n {
        for cj in 0..=(n - ci) {
            let rest = n - ci - cj;
            if residual.is_empty() && rest != 0 {
                continue;
            }
            let mut f = vec![0.0; p];
            f[i] = ci as f64 / n as f64;
            f[j] = cj as f64 / n as f64;
            if residual.len() == 1 {
                f[residual[0]] = rest as f64 / n as f64;
            } else {
                for (&x, wgt) in residual.iter().zip(&residual_weights) {
                    f[x] = rest as f64 / n as f64 * wgt;
                }
            }
            plans.push(f);
            axes.push((ci, cj));
        }
    }
    let (optimum_cell, scores) = argmax(scorer, &plans)?;
    let reference_counts = (
        (reference[i] * n as f64).round() as usize,
        (reference[j] * n as f64).round() as usize,
    );
    let current_cell = axes
        .iter()
        .position(|&c| c == reference_counts)
        .filter(|&c| residual.len() > 1 || plans[c].iter().zip(reference).all(|(a, b)| (a - b).abs() < 1e-9));
    let cells = plans
        .into_iter()
        .zip(axes)
        .zip(scores)
        .map(|((fractions, (ci, cj)), predicted_total)| HeatmapCell {
            fraction_i: ci as f64 / n as f64,
            fraction_j: cj as f64 / n as f64,
            fractions,
            predicted_total,
        })
        .collect();
    Ok(HeatmapGrid {
        wells: wells.to_vec(),
        axis,
        axis_wells: (wells[i].clone(), wells[j].clone()),
        step,
        residual_policy: match residual.len() {
            0 => "none: two wells, diagonal slice".into(),
            1 => "single residual well takes the remainder".into(),
            _ => "proportional to the reference plan's residual fractions".into(),
        },
        residual_weights,
        cells,
        current_cell,
        optimum_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|i| format!("Infill Well {i}")).collect()
    }

    #[test]
    fn three_wells_half_step() {
        let got = enumerate_allocations(3, 0.5).unwrap();
        let want: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.5, 0.5],
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
            vec![1.0, 0.0, 0.0],
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn single_well() {
        assert_eq!(enumerate_allocations(1, 0.01).unwrap(), vec![vec![1.0]]);
    }

    #[test]
    fn percent_grid_count() {
        // Independent count: pairs (a, b) with a + b <= 100.
        let mut count = 0;
        for a in 0..=100 {
            for b in 0..=100 {
                if a + b <= 100 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 5151);
        assert_eq!(enumerate_allocations(3, 0.01).unwrap().len(), count);
    }

    #[test]
    fn step_must_divide_one() {
        assert_eq!(grid_steps(0.3).unwrap_err(), OptimizeError::StepNotDivisor(0.3));
        assert!(grid_steps(0.0).is_err());
        assert_eq!(grid_steps(0.01).unwrap(), 100);
        assert_eq!(grid_steps(0.25).unwrap(), 4);
    }

    #[test]
    fn snapping_uses_largest_remainder() {
        assert_eq!(snap_to_grid(&[1.0, 1.0, 1.0], 100), vec![0.34, 0.33, 0.33]);
        assert_eq!(snap_to_grid(&[0.0, 5.0, 0.0], 100), vec![0.0, 1.0, 0.0]);
        let s = snap_to_grid(&[0.271, 0.039, 0.69], 100);
        assert_eq!(s, vec![0.27, 0.04, 0.69]);
    }

    #[test]
    fn constant_scorer_picks_first_plan() {
        let wells = names(3);
        let r = optimize(&|_: &[f64]| 7.0, &wells, 100.0, 0.5, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.best.fractions, vec![0.0, 0.0, 1.0]);
        assert_eq!(r.improvement, 0.0);
        assert_eq!(r.evaluations, 6);
    }

    #[test]
    fn concave_peak_is_recovered() {
        let peak = [0.27, 0.04, 0.69];
        let f = |x: &[f64]| -x.iter().zip(peak).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let r = optimize(&f, &names(3), 300.0, 0.01, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.best.fractions, peak.to_vec());
        assert_eq!(r.evaluations, 5151);
        assert!(r.predicted_total >= r.reference_predicted);
    }

    #[test]
    fn heatmap_three_wells_covers_simplex() {
        let f = |x: &[f64]| x[0] * 2.0 + x[1] * x[2];
        let wells = names(3);
        let h = heatmap(&f, &wells, 0.01, (0, 1), &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(h.cells.len(), 5151);
        let opt = optimize(&f, &wells, 1.0, 0.01, &[0.0, 1.0, 0.0]).unwrap();
        let grid_max = h.cells.iter().map(|c| c.predicted_total).fold(f64::MIN, f64::max);
        assert_eq!(grid_max, opt.predicted_total);
        assert_eq!(h.cells[h.optimum_cell].fractions, opt.best.fractions);
        let cur = &h.cells[h.current_cell.unwrap()];
        assert_eq!((cur.fraction_i, cur.fraction_j), (0.0, 1.0));
    }

    #[test]
    fn heatmap_two_wells_is_diagonal() {
        let h = heatmap(&|x: &[f64]| x[0], &names(2), 0.1, (0, 1), &[0.5, 0.5]).unwrap();
        assert_eq!(h.cells.len(), 11);
        for c in &h.cells {
            assert!((c.fraction_i + c.fraction_j - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heatmap_four_wells_uses_reference_residual() {
        let h = heatmap(&|x: &[f64]| x[0], &names(4), 0.5, (0, 1), &[0.25, 0.25, 0.5, 0.0]).unwrap();
        assert_eq!(h.residual_weights, vec![1.0, 0.0]);
        assert_eq!(h.cells.len(), 6);
        for c in &h.cells {
            assert!((c.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(c.fractions[3], 0.0);
        }
    }

    #[test]
    fn heatmap_rejects_same_axis() {
        let err = heatmap(&|_: &[f64]| 0.0, &names(3), 0.1, (0, 0), &[0.0, 0.0, 1.0]).unwrap_err();
        assert_eq!(err, OptimizeError::SameWellTwice);
    }

    #[test]
    fn plan_validation() {
        assert!(AllocationPlan::new(names(3), vec![0.33, 0.33, 0.34], 10.0).is_ok());
        assert!(matches!(
            AllocationPlan::new(names(3), vec![0.3, 0.3, 0.3], 10.0),
            Err(OptimizeError::FractionSum(_))
        ));
        assert_eq!(
            AllocationPlan::new(names(3), vec![1.2, -0.2, 0.0], 10.0).unwrap_err(),
            OptimizeError::NegativeFraction
        );
        let plan = AllocationPlan::new(names(3), vec![0.27, 0.04, 0.69], 300.0).unwrap();
        let v: f64 = plan.volumes().iter().sum();
        assert!((v - 300.0).abs() <= 1e-9 * 300.0);
    }
}

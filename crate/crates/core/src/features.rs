//! Leakage-safe lagged design matrix for t-day-prior per-well production forecasts.
//!
//! All lags are relative to the target date `D`. The decision is made on
//! `D - t`: steam enters at lags `1..=t` (the planned schedule between the
//! decision day and the target), while sensors, pump rate and one-hot
//! categories enter at lags `t+1..` only, which is the last history known
//! on the decision day.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{PadTable, RawRecord, WellInfo, WellKind, WellStatus};
use crate::matrix::DenseMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("pad has no infill wells")]
    NoInfillWells,
    #[error("pad has no production wells")]
    NoProductionWells,
    #[error("invalid forecast config: {0}")]
    InvalidConfig(String),
    #[error("date range of {days} days is shorter than t + k + 1 = {needed}")]
    HistoryTooShort { days: usize, needed: usize },
    #[error("no row has an observed target")]
    NoObservedTargets,
    #[error("missing steam for `{well}` on {date}; impute infill steam first")]
    MissingSteam { well: String, date: NaiveDate },
    #[error("missing `{field}` for `{well}` on {date}; impute the production table first")]
    MissingValue {
        well: String,
        field: String,
        date: NaiveDate,
    },
    #[error("infill and production tables are on different date grids")]
    DateGridMismatch,
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    /// Forecast horizon in days.
    pub t: usize,
    /// Sensor history window in days.
    pub k: usize,
    #[serde(default)]
    pub include_oil_lags: bool,
}

impl ForecastConfig {
    pub fn new(t: usize, k: usize) -> Result<Self> {
        let cfg = Self {
            t,
            k,
            include_oil_lags: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 1 {
            return Err(FeatureError::InvalidConfig("t must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(FeatureError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }

    /// Oldest lag used by any feature.
    pub fn max_lag(&self) -> usize {
        self.t + self.k
    }
}

/// Partitions a pad table into its infill and production subsets.
pub fn split_by_kind(table: &PadTable) -> Result<(PadTable, PadTable)> {
    let infill = table.subset(WellKind::Infill);
    if infill.wells.is_empty() {
        return Err(FeatureError::NoInfillWells);
    }
    let production = table.subset(WellKind::Production);
    if production.wells.is_empty() {
        return Err(FeatureError::NoProductionWells);
    }
    Ok((infill, production))
}

/// Daily steam per infill well, one row per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteamWide {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
    /// Row-major `dates.len() x columns.len()`.
    pub values: Vec<f64>,
}

impl SteamWide {
    pub fn get(&self, day: usize, well: usize) -> f64 {
        self.values[day * self.columns.len() + well]
    }

    pub fn set(&mut self, day: usize, well: usize, value: f64) {
        let n = self.columns.len();
        self.values[day * n + well] = value;
    }

    pub fn n_wells(&self) -> usize {
        self.columns.len()
    }

    /// Long form `(date, well, steam)` in date-major order.
    pub fn unpivot(&self) -> Vec<(NaiveDate, String, f64)> {
        let mut out = Vec::with_capacity(self.values.len());
        for (d, date) in self.dates.iter().enumerate() {
            for (x, name) in self.columns.iter().enumerate() {
                out.push((*date, name.clone(), self.get(d, x)));
            }
        }
        out
    }
}

pub fn pivot_infill(infill: &PadTable) -> Result<SteamWide> {
    let wells: Vec<(usize, &WellInfo)> = infill.wells_of_kind(WellKind::Infill).collect();
    if wells.is_empty() {
        return Err(FeatureError::NoInfillWells);
    }
    let n_days = infill.n_days();
    let mut values = vec![0.0; n_days * wells.len()];
    for (col, (w, info)) in wells.iter().enumerate() {
        for (day, rec) in infill.well_rows(*w).iter().enumerate() {
            values[day * wells.len() + col] = rec.steam_volume.ok_or_else(|| FeatureError::MissingSteam {
                well: info.name.clone(),
                date: rec.date,
            })?;
        }
    }
    Ok(SteamWide {
        dates: infill.dates().collect(),
        columns: wells.iter().map(|(_, w)| w.name.clone()).collect(),
        values,
    })
}

/// Effective pump working fraction per production well and day.
#[derive(Debug, Clone, PartialEq)]
pub struct GasDayRate {
    pub wells: Vec<String>,
    /// `values[well][day]`, each in [0, 1].
    pub values: Vec<Vec<f64>>,
}

fn status_rate(status: Option<&WellStatus>) -> f64 {
    match status {
        Some(WellStatus::Pump) => 1.0,
        Some(WellStatus::ShutIn) => 0.0,
        Some(WellStatus::Other(_)) | None => 0.5,
    }
}

fn record_rate(rec: &RawRecord, use_hours: bool) -> f64 {
    match rec.pump_hours {
        Some(h) if use_hours => (h / 24.0).clamp(0.0, 1.0),
        _ => status_rate(rec.well_status.as_ref()),
    }
}

/// `pump_hours / 24` when the pad reports pump hours, otherwise derived from
/// status (Pump 1.0, Shut-In 0.0, anything else 0.5).
pub fn derive_gas_day_rate(production: &PadTable) -> GasDayRate {
    let mut wells = Vec::new();
    let mut values = Vec::new();
    for (w, info) in production.wells_of_kind(WellKind::Production) {
        wells.push(info.name.clone());
        values.push(
            production
                .well_rows(w)
                .iter()
                .map(|r| record_rate(r, production.has_pump_hours))
                .collect(),
        );
    }
    GasDayRate { wells, values }
}

/// One-hot encoding of production well names and observed status levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotEncoding {
    pub wells: Vec<String>,
    /// Status labels sorted lexicographically.
    pub statuses: Vec<String>,
}

impl OneHotEncoding {
    pub fn columns(&self) -> Vec<String> {
        self.wells
            .iter()
            .map(|w| format!("well_{w}"))
            .chain(self.statuses.iter().map(|s| format!("status_{s}")))
            .collect()
    }

    pub fn width(&self) -> usize {
        self.wells.len() + self.statuses.len()
    }

    pub fn encode_into(&self, well: usize, status: Option<&WellStatus>, out: &mut [f64]) {
        out.fill(0.0);
        out[well] = 1.0;
        if let Some(s) = status {
            if let Some(i) = self.statuses.iter().position(|l| l == s.label()) {
                out[self.wells.len() + i] = 1.0;
            }
        }
    }

    pub fn encode(&self, well: usize, status: Option<&WellStatus>) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(well, status, &mut out);
        out
    }
}

pub fn one_hot(production: &PadTable) -> OneHotEncoding {
    let mut statuses = BTreeSet::new();
    let mut wells = Vec::new();
    for (w, info) in production.wells_of_kind(WellKind::Production) {
        wells.push(info.name.clone());
        for r in production.well_rows(w) {
            if let Some(s) = &r.well_status {
                statuses.insert(s.label().to_string());
            }
        }
    }
    OneHotEncoding {
        wells,
        statuses: statuses.into_iter().collect(),
    }
}

pub fn steam_feature_name(m: usize, infill: &str) -> String {
    format!("prior_{m}-day_infill_well_{infill}-steam")
}

pub fn sensor_feature_name(n: usize, sensor: &str) -> String {
    format!("prior_{n}-day_sensor_{sensor}-value")
}

pub fn oil_feature_name(n: usize) -> String {
    format!("prior_{n}-day_oil-value")
}

pub const GAS_DAY_RATE: &str = "gas_day_rate";

/// Ordered feature layout: steam block, sensor block (+ optional oil lags),
/// gas_day_rate, well one-hots, status one-hots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub config: ForecastConfig,
    pub infill_wells: Vec<String>,
    pub sensors: Vec<String>,
    pub encoding: OneHotEncoding,
    pub names: Vec<String>,
}

impl FeatureSpec {
    pub fn new(config: ForecastConfig, infill_wells: Vec<String>, sensors: Vec<String>, encoding: OneHotEncoding) -> Self {
        let ForecastConfig { t, k, include_oil_lags } = config;
        let mut names = Vec::new();
        for m in 1..=t {
            for x in &infill_wells {
                names.push(steam_feature_name(m, x));
            }
        }
        for n in t + 1..=t + k {
            for y in &sensors {
                names.push(sensor_feature_name(n, y));
            }
        }
        if include_oil_lags {
            for n in t + 1..=t + k {
                names.push(oil_feature_name(n));
            }
        }
        names.push(GAS_DAY_RATE.to_string());
        names.extend(encoding.columns());
        Self {
            config,
            infill_wells,
            sensors,
            encoding,
            names,
        }
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Column of `prior_m-day_infill_well_x-steam`.
    pub fn steam_col(&self, m: usize, infill: usize) -> usize {
        debug_assert!((1..=self.config.t).contains(&m));
        (m - 1) * self.infill_wells.len() + infill
    }

    pub fn steam_block(&self) -> std::ops::Range<usize> {
        0..self.config.t * self.infill_wells.len()
    }

    pub fn sensor_col(&self, n: usize, sensor: usize) -> usize {
        debug_assert!((self.config.t + 1..=self.config.max_lag()).contains(&n));
        self.steam_block().end + (n - self.config.t - 1) * self.sensors.len() + sensor
    }

    fn oil_block_start(&self) -> usize {
        self.steam_block().end + self.config.k * self.sensors.len()
    }

    pub fn gas_col(&self) -> usize {
        self.oil_block_start() + if self.config.include_oil_lags { self.config.k } else { 0 }
    }

    pub fn one_hot_block(&self) -> std::ops::Range<usize> {
        self.gas_col() + 1..self.width()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub date: NaiveDate,
    pub well: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    /// Sorted by (date, well).
    pub keys: Vec<RowKey>,
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub spec: FeatureSpec,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            spec: self.spec.clone(),
        }
    }

    pub fn filter_dates(&self, keep: impl Fn(NaiveDate) -> bool) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(self.keys[i].date)).collect();
        self.select_rows(&idx)
    }

    /// Distinct target dates in ascending order.
    pub fn distinct_dates(&self) -> Vec<NaiveDate> {
        let mut dates: Vec<NaiveDate> = self.keys.iter().map(|k| k.date).collect();
        dates.dedup();
        dates
    }

    /// CSV with `date, well`, every feature in spec order, then `target`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string(), "well".to_string()];
        header.extend(self.spec.names.iter().cloned());
        header.push("target".into());
        w.write_record(&header)?;
        for (i, key) in self.keys.iter().enumerate() {
            let mut line = vec![key.date.to_string(), key.well.clone()];
            line.extend(self.x.row(i).iter().map(f64::to_string));
            line.push(self.y[i].to_string());
            w.write_record(&line)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-production-well series aligned on the pad date grid.
#[derive(Debug, Clone)]
struct ProductionFrame {
    /// `sensors[well][day * n_sensors + s]`.
    sensors: Vec<Vec<f64>>,
    status: Vec<Vec<Option<WellStatus>>>,
    gas: Vec<Vec<f64>>,
    oil: Vec<Vec<Option<f64>>>,
    /// Oil with forward/backward copy, used only for the optional oil lags.
    oil_filled: Vec<Vec<f64>>,
}

/// Builds feature rows for arbitrary target days, including days past the end
/// of the table (production context is then frozen at the last observed day).
#[derive(Debug, Clone)]
pub struct FeatureBuilder {
    spec: FeatureSpec,
    steam: SteamWide,
    frame: ProductionFrame,
    date_min: NaiveDate,
    n_days: usize,
}

impl FeatureBuilder {
    pub fn new(steam: SteamWide, production: &PadTable, cfg: ForecastConfig) -> Result<Self> {
        cfg.validate()?;
        if steam.dates.len() != production.n_days() || steam.dates.first() != Some(&production.date_min) {
            return Err(FeatureError::DateGridMismatch);
        }
        let prod: Vec<(usize, &WellInfo)> = production.wells_of_kind(WellKind::Production).collect();
        if prod.is_empty() {
            return Err(FeatureError::NoProductionWells);
        }
        let gas = derive_gas_day_rate(production);
        let encoding = one_hot(production);
        let sensors = production.sensor_names.clone();

        let mut frame = ProductionFrame {
            sensors: Vec::new(),
            status: Vec::new(),
            gas: gas.values,
            oil: Vec::new(),
            oil_filled: Vec::new(),
        };
        for (w, info) in &prod {
            let rows = production.well_rows(*w);
            let mut sv = Vec::with_capacity(rows.len() * sensors.len());
            for r in rows {
                for s in &sensors {
                    let v = r.sensors.get(s).copied().flatten().ok_or_else(|| FeatureError::MissingValue {
                        well: info.name.clone(),
                        field: format!("sensor:{s}"),
                        date: r.date,
                    })?;
                    sv.push(v);
                }
            }
            frame.sensors.push(sv);
            frame.status.push(rows.iter().map(|r| r.well_status.clone()).collect());
            let oil: Vec<Option<f64>> = rows.iter().map(|r| r.oil_volume).collect();
            let mut filled = oil.clone();
            let filled = match crate::ingest::fill_forward_backward(&mut filled) {
                Some(_) => filled.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
                None => vec![0.0; oil.len()],
            };
            frame.oil.push(oil);
            frame.oil_filled.push(filled);
        }

        let spec = FeatureSpec::new(cfg, steam.columns.clone(), sensors, encoding);
        Ok(Self {
            spec,
            steam,
            frame,
            date_min: production.date_min,
            n_days: production.n_days(),
        })
    }

    /// Splits, pivots and wraps an imputed pad table.
    pub fn from_table(table: &PadTable, cfg: ForecastConfig) -> Result<Self> {
        let (infill, production) = split_by_kind(table)?;
        let steam = pivot_infill(&infill)?;
        Self::new(steam, &production, cfg)
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn steam(&self) -> &SteamWide {
        &self.steam
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn date_min(&self) -> NaiveDate {
        self.date_min
    }

    pub fn day_of(&self, date: NaiveDate) -> i64 {
        (date - self.date_min).num_days()
    }

    pub fn date_of(&self, day: i64) -> NaiveDate {
        self.date_min + chrono::Duration::days(day)
    }

    pub fn n_production(&self) -> usize {
        self.spec.encoding.wells.len()
    }

    pub fn observed_oil(&self, well: usize, day: usize) -> Option<f64> {
        self.frame.oil[well][day]
    }

    fn context_day(&self, day: i64) -> usize {
        assert!(day >= 0, "feature window reaches before the first date");
        (day as usize).min(self.n_days - 1)
    }

    /// Writes the feature row of `(target_day, well)`. `steam_at(day, infill)`
    /// supplies steam for every lagged day `target_day - m`, `m = 1..=t`.
    pub fn write_row(&self, target_day: i64, well: usize, steam_at: impl Fn(i64, usize) -> f64, out: &mut [f64]) {
        let spec = &self.spec;
        let ForecastConfig { t, k, include_oil_lags } = spec.config;
        let p = spec.infill_wells.len();
        let n_sensors = spec.sensors.len();
        debug_assert_eq!(out.len(), spec.width());

        for m in 1..=t {
            let day = target_day - m as i64;
            for x in 0..p {
                out[(m - 1) * p + x] = steam_at(day, x);
            }
        }
        let mut col = t * p;
        for n in t + 1..=t + k {
            let day = self.context_day(target_day - n as i64);
            out[col..col + n_sensors].copy_from_slice(&self.frame.sensors[well][day * n_sensors..(day + 1) * n_sensors]);
            col += n_sensors;
        }
        if include_oil_lags {
            for n in t + 1..=t + k {
                out[col] = self.frame.oil_filled[well][self.context_day(target_day - n as i64)];
                col += 1;
            }
        }
        let decision = self.context_day(target_day - t as i64 - 1);
        out[col] = self.frame.gas[well][decision];
        col += 1;
        spec.encoding
            .encode_into(well, self.frame.status[well][decision].as_ref(), &mut out[col..]);
    }

    /// Feature row for an in-range target day using historical steam.
    pub fn historical_row(&self, target_day: usize, well: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.width()];
        self.write_row(target_day as i64, well, |d, x| self.steam.get(d as usize, x), &mut out);
        out
    }

    pub fn build(&self) -> Result<FeatureMatrix> {
        let max_lag = self.spec.config.max_lag();
        if self.n_days < max_lag + 1 {
            return Err(FeatureError::HistoryTooShort {
                days: self.n_days,
                needed: max_lag + 1,
            });
        }
        let width = self.spec.width();
        let mut keys = Vec::new();
        let mut data = Vec::new();
        let mut y = Vec::new();
        let mut row = vec![0.0; width];
        for day in max_lag..self.n_days {
            for w in 0..self.n_production() {
                let Some(target) = self.frame.oil[w][day] else { continue };
                self.write_row(day as i64, w, |d, x| self.steam.get(d as usize, x), &mut row);
                keys.push(RowKey {
                    date: self.date_of(day as i64),
                    well: self.spec.encoding.wells[w].clone(),
                });
                data.extend_from_slice(&row);
                y.push(target);
            }
        }
        if keys.is_empty() {
            return Err(FeatureError::NoObservedTargets);
        }
        Ok(FeatureMatrix {
            x: DenseMatrix::new(keys.len(), width, data),
            keys,
            y,
            spec: self.spec.clone(),
        })
    }
}

/// Builds the design matrix: one row per (target date, production well) with
/// an observed target and a full `t + k` day history.
pub fn build_matrix(steam: &SteamWide, production: &PadTable, cfg: ForecastConfig) -> Result<FeatureMatrix> {
    FeatureBuilder::new(steam.clone(), production, cfg)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{consolidate, impute, ImputePolicy};

    fn d0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 4, 17).unwrap()
    }

    /// `n_infill` infill wells, `n_prod` production wells with `sensors`, `days` days.
    fn synthetic_table(n_infill: usize, n_prod: usize, sensors: &[&str], days: usize) -> PadTable {
        let mut recs = Vec::new();
        for day in 0..days {
            let date = d0() + chrono::Duration::days(day as i64);
            for i in 0..n_infill {
                let mut r = RawRecord::empty(date, format!("Infill Well {}", i + 1));
                r.steam_volume = Some((day * 10 + i) as f64);
                recs.push(r);
            }
            for p in 0..n_prod {
                let mut r = RawRecord::empty(date, format!("Prod Well {}", p + 1));
                r.well_status = Some(if (day + p) % 5 == 0 { WellStatus::ShutIn } else { WellStatus::Pump });
                for (s, name) in sensors.iter().enumerate() {
                    r.sensors.insert(name.to_string(), Some((1000 * p + 100 * s + day) as f64));
                }
                r.oil_volume = Some((day + p) as f64);
                recs.push(r);
            }
        }
        impute(&consolidate(&[recs], "pad").unwrap(), &ImputePolicy::default()).unwrap()
    }

    #[test]
    fn split_partitions_rows() {
        let t = synthetic_table(3, 8, &["temp"], 5);
        let (inf, prod) = split_by_kind(&t).unwrap();
        assert_eq!(inf.wells.len(), 3);
        assert_eq!(prod.wells.len(), 8);
        assert_eq!(inf.rows().len() + prod.rows().len(), t.rows().len());
    }

    #[test]
    fn split_without_infill_fails() {
        let t = synthetic_table(0, 2, &["temp"], 5);
        assert_eq!(split_by_kind(&t).unwrap_err(), FeatureError::NoInfillWells);
    }

    #[test]
    fn pivot_shape_and_round_trip() {
        let t = synthetic_table(2, 1, &["temp"], 3);
        let (inf, _) = split_by_kind(&t).unwrap();
        let wide = pivot_infill(&inf).unwrap();
        assert_eq!((wide.dates.len(), wide.columns.len()), (3, 2));
        let long: Vec<(NaiveDate, String, f64)> = inf
            .dates()
            .enumerate()
            .flat_map(|(day, date)| {
                (0..2).map(move |w| (date, format!("Infill Well {}", w + 1), (day * 10 + w) as f64))
            })
            .collect();
        assert_eq!(wide.unpivot(), long);
    }

    #[test]
    fn pivot_keeps_table_value() {
        let mut r = RawRecord::empty(d0(), "Infill Well 1");
        r.steam_volume = Some(6.0);
        let mut p = RawRecord::empty(d0(), "Prod Well 1");
        p.well_status = Some(WellStatus::Pump);
        let t = consolidate(&[vec![r, p]], "pad").unwrap();
        let (inf, _) = split_by_kind(&t).unwrap();
        let wide = pivot_infill(&inf).unwrap();
        assert_eq!(wide.columns[0], "Infill Well 1");
        assert_eq!(wide.get(0, 0), 6.0);
    }

    #[test]
    fn gas_day_rate_rules() {
        let mk = |status: WellStatus, hours: Option<f64>| {
            let mut r = RawRecord::empty(d0(), "P");
            r.well_status = Some(status);
            r.pump_hours = hours;
            r.oil_volume = Some(1.0);
            consolidate(&[vec![r]], "pad").unwrap()
        };
        assert_eq!(derive_gas_day_rate(&mk(WellStatus::Pump, Some(12.0))).values[0][0], 0.5);
        assert_eq!(derive_gas_day_rate(&mk(WellStatus::ShutIn, None)).values[0][0], 0.0);
        assert_eq!(derive_gas_day_rate(&mk(WellStatus::Pump, None)).values[0][0], 1.0);
        assert_eq!(derive_gas_day_rate(&mk(WellStatus::Other("Workover".into()), None)).values[0][0], 0.5);
    }

    #[test]
    fn one_hot_cardinality_and_rows() {
        let t = synthetic_table(1, 8, &["temp"], 6);
        let (_, prod) = split_by_kind(&t).unwrap();
        let enc = one_hot(&prod);
        assert_eq!(enc.width(), 10);
        let row = enc.encode(0, Some(&WellStatus::Pump));
        assert_eq!(row.iter().sum::<f64>(), 2.0);
        assert_eq!(row[0], 1.0);
        let pump = enc.statuses.iter().position(|s| s == "Pump").unwrap();
        assert_eq!(row[8 + pump], 1.0);
        for w in 0..8 {
            let r = enc.encode(w, Some(&WellStatus::ShutIn));
            assert_eq!(r[..8].iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn lag_ranges_for_small_config() {
        let t = synthetic_table(1, 1, &["temp"], 10);
        let b = FeatureBuilder::from_table(&t, ForecastConfig::new(2, 3).unwrap()).unwrap();
        let names = &b.spec().names;
        assert_eq!(
            &names[..5],
            &[
                "prior_1-day_infill_well_Infill Well 1-steam",
                "prior_2-day_infill_well_Infill Well 1-steam",
                "prior_3-day_sensor_temp-value",
                "prior_4-day_sensor_temp-value",
                "prior_5-day_sensor_temp-value",
            ]
        );
    }

    #[test]
    fn row_count_for_hundred_days() {
        let t = synthetic_table(1, 8, &["temp"], 100);
        let m = FeatureBuilder::from_table(&t, ForecastConfig::new(30, 14).unwrap())
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(m.n_rows(), 448);
    }

    #[test]
    fn column_count_matches_enumeration() {
        let t = synthetic_table(3, 8, &["pressure", "temp"], 50);
        let b = FeatureBuilder::from_table(&t, ForecastConfig::new(30, 14).unwrap()).unwrap();
        // Enumerate distinct names per block independently of the layout code.
        let names = &b.spec().names;
        let steam = names.iter().filter(|n| n.ends_with("-steam")).count();
        let sensor = names.iter().filter(|n| n.contains("-day_sensor_")).count();
        let gas = names.iter().filter(|n| *n == GAS_DAY_RATE).count();
        let hot = names.iter().filter(|n| n.starts_with("well_") || n.starts_with("status_")).count();
        assert_eq!((steam, sensor, gas, hot), (90, 28, 1, 10));
        assert_eq!(names.len(), 129);
        let unique: BTreeSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), 129);
    }

    #[test]
    fn history_too_short() {
        let t = synthetic_table(1, 1, &["temp"], 10);
        let err = FeatureBuilder::from_table(&t, ForecastConfig::new(5, 5).unwrap())
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, FeatureError::HistoryTooShort { days: 10, needed: 11 });
    }

    #[test]
    fn zero_horizon_is_rejected() {
        assert!(ForecastConfig::new(0, 3).is_err());
        assert!(ForecastConfig::new(3, 0).is_err());
    }

    #[test]
    fn oil_lags_extend_sensor_block() {
        let t = synthetic_table(1, 2, &["temp"], 20);
        let cfg = ForecastConfig {
            t: 2,
            k: 3,
            include_oil_lags: true,
        };
        let b = FeatureBuilder::from_table(&t, cfg).unwrap();
        let spec = b.spec();
        assert_eq!(spec.names[5], "prior_3-day_oil-value");
        assert_eq!(spec.gas_col(), 8);
        let m = b.build().unwrap();
        // Row 0 is (day 5, Prod Well 1); oil(day, p) = day + p.
        assert_eq!(m.x.get(0, 5), 2.0);
        assert_eq!(m.x.get(0, 7), 0.0);
    }

    #[test]
    fn values_follow_lag_definitions() {
        let t = synthetic_table(2, 2, &["temp"], 30);
        let b = FeatureBuilder::from_table(&t, ForecastConfig::new(3, 4).unwrap()).unwrap();
        let m = b.build().unwrap();
        let spec = &m.spec;
        for (i, key) in m.keys.iter().enumerate() {
            let day = (key.date - d0()).num_days() as usize;
            let p: usize = key.well.trim_start_matches("Prod Well ").parse::<usize>().unwrap() - 1;
            for mm in 1..=3 {
                for x in 0..2 {
                    assert_eq!(m.x.get(i, spec.steam_col(mm, x)), ((day - mm) * 10 + x) as f64);
                }
            }
            for n in 4..=7 {
                assert_eq!(m.x.get(i, spec.sensor_col(n, 0)), (1000 * p + day - n) as f64);
            }
            let expected_gas = if (day - 4 + p).is_multiple_of(5) { 0.0 } else { 1.0 };
            assert_eq!(m.x.get(i, spec.gas_col()), expected_gas);
            assert_eq!(m.y[i], (day + p) as f64);
        }
    }
}

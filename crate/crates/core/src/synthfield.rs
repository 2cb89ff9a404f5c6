//! Seeded synthetic pad with a closed-form production function.
//!
//! Oil at production well `w` on day `D`:
//!
//! ```text
//! oil = base_w + sum_j a[w][j] * r(sbar_j(D)) * g(D, w) + beta_w * temperature(D - memory, w)
//! ```
//!
//! where `sbar_j(D)` is the mean steam of infill well `j` over days
//! `D-memory .. D-1`, `r(s) = s / (s + c)` and `g` is the day's pump-time
//! fraction. The result is clamped at zero. Recorded oil adds clipped Gaussian
//! noise.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SourceDescriptor;
use crate::optimize::{grid_steps, OptimizeError};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid field config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

pub const TEMPERATURE: &str = "temperature";
pub const PRESSURE: &str = "pressure";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub pad_id: String,
    pub n_production: usize,
    pub n_infill: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Days of steam history that drive production.
    pub steam_memory: usize,
    /// Saturation scale `c` of `r(s) = s / (s + c)`, m³/day.
    pub saturation_scale: f64,
    /// Nominal daily pad steam, m³/day.
    pub total_steam: f64,
    /// Allocation at which the steady-state response peaks (used when
    /// `response_coeffs` is not given).
    pub target_optimum: Vec<f64>,
    /// Explicit `a[w][j]`; overrides the coefficients derived from `target_optimum`.
    pub response_coeffs: Option<Vec<Vec<f64>>>,
    /// Mean per-well steam contribution at the target optimum, m³/day.
    pub steam_oil_scale: f64,
    pub base_oil_range: (f64, f64),
    pub sensor_beta: f64,
    /// Daily probability that a pumping well starts a shut-in episode.
    pub shut_in_rate: f64,
    pub allocation_segment_days: (usize, usize),
    /// Segment totals are drawn from `total_steam * [lo, hi]`.
    pub total_steam_jitter: (f64, f64),
    pub noise_sigma: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            pad_id: "synthetic-pad".into(),
            n_production: 8,
            n_infill: 3,
            start: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2018, 12, 31).expect("valid date"),
            steam_memory: 14,
            saturation_scale: 60.0,
            total_steam: 300.0,
            target_optimum: vec![0.27, 0.04, 0.69],
            response_coeffs: None,
            steam_oil_scale: 20.0,
            base_oil_range: (6.0, 10.0),
            sensor_beta: 0.02,
            shut_in_rate: 0.004,
            allocation_segment_days: (7, 21),
            total_steam_jitter: (0.8, 1.2),
            noise_sigma: 0.0,
            missing_rate: 0.01,
            seed: 7,
        }
    }
}

impl FieldConfig {
    pub fn n_days(&self) -> usize {
        ((self.end - self.start).num_days() + 1).max(0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_production == 0 || self.n_infill == 0 {
            return bad("well counts must be at least 1");
        }
        if self.end < self.start {
            return bad("end date precedes start date");
        }
        if self.steam_memory == 0 {
            return bad("steam_memory must be at least 1");
        }
        if !(0.0..=0.5).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 0.5]");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(self.saturation_scale > 0.0 && self.total_steam > 0.0 && self.steam_oil_scale >= 0.0) {
            return bad("saturation_scale and total_steam must be positive");
        }
        if !(0.0..=1.0).contains(&self.shut_in_rate) {
            return bad("shut_in_rate must lie in [0, 1]");
        }
        let (lo, hi) = self.allocation_segment_days;
        if lo == 0 || hi < lo {
            return bad("allocation_segment_days must be a non-empty range of positive days");
        }
        let (jl, jh) = self.total_steam_jitter;
        if !(jl > 0.0 && jh >= jl) {
            return bad("total_steam_jitter must be a positive range");
        }
        let (bl, bh) = self.base_oil_range;
        if !(bl >= 0.0 && bh >= bl) {
            return bad("base_oil_range must be a non-negative range");
        }
        match &self.response_coeffs {
            Some(a) => {
                if a.len() != self.n_production || a.iter().any(|r| r.len() != self.n_infill) {
                    return bad("response_coeffs must be n_production x n_infill");
                }
                if a.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad("response_coeffs must be finite and non-negative");
                }
            }
            None => {
                if self.target_optimum.len() != self.n_infill {
                    return bad("target_optimum needs one fraction per infill well");
                }
                let sum: f64 = self.target_optimum.iter().sum();
                if self.target_optimum.iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return bad("target_optimum must be a fraction vector summing to 1");
                }
            }
        }
        Ok(())
    }

    pub fn infill_names(&self) -> Vec<String> {
        (1..=self.n_infill).map(|i| format!("Infill Well {i}")).collect()
    }

    pub fn production_names(&self) -> Vec<String> {
        (1..=self.n_production).map(|i| format!("Production Well {i}")).collect()
    }
}

/// Parameters of the closed-form production function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub infill_wells: Vec<String>,
    pub production_wells: Vec<String>,
    pub steam_memory: usize,
    pub saturation_scale: f64,
    pub base: Vec<f64>,
    /// `coeffs[w][j]`: response of production well `w` to infill well `j`.
    pub coeffs: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    /// Long-run mean temperature per production well.
    pub temperature_mean: Vec<f64>,
}

impl GroundTruth {
    pub fn response(&self, steam: f64) -> f64 {
        steam / (steam + self.saturation_scale)
    }

    /// Oil of well `w` given trailing steam means, pump fraction and lagged temperature.
    pub fn oil(&self, w: usize, steam_means: &[f64], gas_day_rate: f64, temperature: f64) -> f64 {
        let steam: f64 = self.coeffs[w]
            .iter()
            .zip(steam_means)
            .map(|(a, s)| a * self.response(*s))
            .sum();
        (self.base[w] + steam * gas_day_rate + self.beta[w] * temperature).max(0.0)
    }

    /// Pad response summed over production wells, per infill well.
    pub fn pad_coeffs(&self) -> Vec<f64> {
        (0..self.infill_wells.len())
            .map(|j| self.coeffs.iter().map(|row| row[j]).sum())
            .collect()
    }

    /// Daily pad oil once a constant allocation has been held for longer than
    /// the steam memory, with every well pumping and temperature at its mean.
    pub fn steady_state_total(&self, fractions: &[f64], total_steam: f64) -> f64 {
        let fixed: f64 = self
            .base
            .iter()
            .zip(&self.beta)
            .zip(&self.temperature_mean)
            .map(|((b, beta), t)| b + beta * t)
            .sum();
        let mut terms: Vec<f64> = self
            .pad_coeffs()
            .iter()
            .zip(fractions)
            .map(|(a, f)| a * self.response(f * total_steam))
            .collect();
        // Order-independent sum so that symmetric wells tie exactly.
        terms.sort_by(f64::total_cmp);
        fixed + terms.iter().sum::<f64>()
    }

    /// Exhaustive argmax of the steady-state total over the `step` simplex,
    /// ties to the lexicographically smallest vector.
    pub fn true_optimum(&self, total_steam: f64, step: f64) -> Result<Vec<f64>> {
        let n = grid_steps(step)?;
        let p = self.infill_wells.len();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut counts = vec![0usize; p];
        loop {
            let used: usize = counts[..p - 1].iter().sum();
            if used <= n {
                counts[p - 1] = n - used;
                let f: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
                let v = self.steady_state_total(&f, total_steam);
                // Odometer order visits vectors lexicographically, so a strict
                // comparison keeps the smallest of any tie.
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, counts.clone()));
                }
            }
            // Advance the odometer over the first p - 1 digits, last digit fastest.
            let mut pos = p.checked_sub(2);
            loop {
                match pos {
                    None => {
                        let (_, c) = best.expect("at least one plan");
                        return Ok(c.iter().map(|&c| c as f64 / n as f64).collect());
                    }
                    Some(i) => {
                        if counts[i] < n {
                            counts[i] += 1;
                            for c in &mut counts[i + 1..p - 1] {
                                *c = 0;
                            }
                            break;
                        }
                        counts[i] = 0;
                        pos = i.checked_sub(1);
                    }
                }
            }
        }
    }
}

/// One emitted CSV source with the descriptor that reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSource {
    pub name: String,
    pub descriptor: SourceDescriptor,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedField {
    pub config: FieldConfig,
    pub sources: Vec<GeneratedSource>,
    pub truth: GroundTruth,
    /// Noise-free oil, `true_oil[w][d]`.
    pub true_oil: Vec<Vec<f64>>,
    /// Actual injected steam, `steam[j][d]` (zero on unreported days).
    pub steam: Vec<Vec<f64>>,
}

impl GeneratedField {
    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.config.start.iter_days().take(self.config.n_days())
    }

    /// Inputs in the form `ingest_sources` takes.
    pub fn inputs(&self) -> Vec<(SourceDescriptor, Vec<u8>)> {
        self.sources
            .iter()
            .map(|s| (s.descriptor.clone(), s.csv.clone().into_bytes()))
            .collect()
    }

    pub fn mean_true_oil(&self) -> f64 {
        let n: usize = self.true_oil.iter().map(Vec::len).sum();
        self.true_oil.iter().flatten().sum::<f64>() / n as f64
    }
}

/// Independent random streams, one per generated component.
#[derive(Clone, Copy)]
enum Stream {
    Coeffs = 1,
    Steam,
    Status,
    Sensors,
    Noise,
    Missing,
    Tests,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

fn descriptor(source_id: u8, date_format: &str, columns: &[(&str, &str)]) -> SourceDescriptor {
    SourceDescriptor {
        source_id,
        column_map: columns
            .iter()
            .map(|(h, f)| (h.to_string(), f.to_string()))
            .collect::<BTreeMap<_, _>>(),
        date_format: date_format.to_string(),
    }
}

struct CsvOut {
    w: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    fn row(&mut self, cells: &[String]) {
        self.w.write_record(cells).expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

fn ground_truth(cfg: &FieldConfig) -> GroundTruth {
    let mut r = rng(cfg.seed, Stream::Coeffs);
    let (bl, bh) = cfg.base_oil_range;
    let base: Vec<f64> = (0..cfg.n_production).map(|_| bl + (bh - bl) * r.random::<f64>()).collect();
    let temperature_mean: Vec<f64> = (0..cfg.n_production).map(|_| r.random_range(180.0..220.0)).collect();
    let multipliers: Vec<f64> = (0..cfg.n_production).map(|_| r.random_range(0.7..1.3)).collect();

    let coeffs = match &cfg.response_coeffs {
        Some(a) => a.clone(),
        None => {
            // The steady-state optimum of sum_j A_j r(f_j T) on the simplex satisfies
            // A_j c / (f_j T + c)^2 = const, so A_j ∝ (f*_j T + c)^2 places it at f*.
            let c = cfg.saturation_scale;
            let raw: Vec<f64> = cfg
                .target_optimum
                .iter()
                .map(|f| (f * cfg.total_steam + c).powi(2))
                .collect();
            let at_opt: f64 = raw
                .iter()
                .zip(&cfg.target_optimum)
                .map(|(a, f)| a * (f * cfg.total_steam) / (f * cfg.total_steam + c))
                .sum();
            let scale = cfg.steam_oil_scale * cfg.n_production as f64 / at_opt;
            let msum: f64 = multipliers.iter().sum();
            multipliers
                .iter()
                .map(|u| raw.iter().map(|a| a * scale * u / msum).collect())
                .collect()
        }
    };
    GroundTruth {
        infill_wells: cfg.infill_names(),
        production_wells: cfg.production_names(),
        steam_memory: cfg.steam_memory,
        saturation_scale: cfg.saturation_scale,
        base,
        coeffs,
        beta: vec![cfg.sensor_beta; cfg.n_production],
        temperature_mean,
    }
}

fn uniform_simplex(r: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..p).map(|_| Exp1.sample(r)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Generates the pad. Same config, same bytes.
pub fn generate(cfg: &FieldConfig) -> Result<GeneratedField> {
    cfg.validate()?;
    let truth = ground_truth(cfg);
    let n = cfg.n_days();
    let burn = cfg.steam_memory + 60;
    let total_len = n + burn;
    let (np, ni) = (cfg.n_production, cfg.n_infill);
    let mut missing = rng(cfg.seed, Stream::Missing);
    let mut drop_cell = |rate: f64| rate > 0.0 && missing.random::<f64>() < rate;

    // Steam: piecewise-constant allocations. A missing steam report means no
    // injection that day, matching the zero-fill imputation of steam.
    let mut r = rng(cfg.seed, Stream::Steam);
    let mut steam = vec![vec![0.0; total_len]; ni];
    let mut steam_reported = vec![vec![true; n]; ni];
    let mut i = 0;
    while i < total_len {
        let (lo, hi) = cfg.allocation_segment_days;
        let len = r.random_range(lo..=hi);
        let total = cfg.total_steam * r.random_range(cfg.total_steam_jitter.0..=cfg.total_steam_jitter.1);
        let f = uniform_simplex(&mut r, ni);
        let end = (i + len).min(total_len);
        for (row, fj) in steam.iter_mut().zip(&f) {
            row[i..end].fill(fj * total);
        }
        i += len;
    }
    for d in 0..n {
        for j in 0..ni {
            if drop_cell(cfg.missing_rate) {
                steam[j][burn + d] = 0.0;
                steam_reported[j][d] = false;
            }
        }
    }

    // Status and pump hours.
    let mut r = rng(cfg.seed, Stream::Status);
    let mut pump_hours = vec![vec![24.0; n]; np];
    for hours in &mut pump_hours {
        let mut shut = 0usize;
        for h in hours.iter_mut() {
            if shut == 0 && r.random::<f64>() < cfg.shut_in_rate {
                shut = r.random_range(1..=5);
            }
            if shut > 0 {
                *h = 0.0;
                shut -= 1;
            } else if r.random::<f64>() < 0.03 {
                *h = r.random_range(20.0..24.0);
            }
        }
    }

    // Sensors: AR(1) around per-well means. Pressure does not drive oil.
    let mut r = rng(cfg.seed, Stream::Sensors);
    let mut temperature = vec![vec![0.0; total_len]; np];
    let mut pressure = vec![vec![0.0; total_len]; np];
    let t_shock = Normal::new(0.0, 1.0).expect("valid normal");
    let p_shock = Normal::new(0.0, 10.0).expect("valid normal");
    for w in 0..np {
        let p_mean = r.random_range(1500.0..2500.0);
        let (mut t, mut p) = (truth.temperature_mean[w], p_mean);
        for d in 0..total_len {
            t = truth.temperature_mean[w] + 0.98 * (t - truth.temperature_mean[w]) + t_shock.sample(&mut r);
            p = p_mean + 0.95 * (p - p_mean) + p_shock.sample(&mut r);
            temperature[w][d] = t;
            pressure[w][d] = p;
        }
    }

    // Oil.
    let mem = cfg.steam_memory;
    let mut true_oil = vec![vec![0.0; n]; np];
    let mut means = vec![0.0; ni];
    for d in 0..n {
        let day = burn + d;
        for (j, m) in means.iter_mut().enumerate() {
            *m = steam[j][day - mem..day].iter().sum::<f64>() / mem as f64;
        }
        for w in 0..np {
            true_oil[w][d] = truth.oil(w, &means, pump_hours[w][d] / 24.0, temperature[w][day - mem]);
        }
    }
    let mut r = rng(cfg.seed, Stream::Noise);
    let recorded: Vec<Vec<f64>> = if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("valid normal");
        true_oil
            .iter()
            .map(|row| row.iter().map(|v| (v + noise.sample(&mut r)).max(0.0)).collect())
            .collect()
    } else {
        true_oil.clone()
    };

    let dates: Vec<NaiveDate> = cfg.start.iter_days().take(n).collect();
    let infill = cfg.infill_names();
    let production = cfg.production_names();
    let cell = |keep: bool, v: String| if keep { v } else { String::new() };

    // 1: operations log (status + pump hours).
    let mut s1 = CsvOut::new(&["Date", "Well Name", "Well Status", "Pump Hours"]);
    for (d, date) in dates.iter().enumerate() {
        for (w, name) in production.iter().enumerate() {
            let status = if pump_hours[w][d] > 0.0 { "Pump" } else { "Shut-In" };
            s1.row(&[
                date.format("%Y-%m-%d").to_string(),
                name.clone(),
                cell(!drop_cell(cfg.missing_rate), status.to_string()),
                cell(!drop_cell(cfg.missing_rate), fmt_num(pump_hours[w][d])),
            ]);
        }
    }
    // 2: sensor historian.
    let mut s2 = CsvOut::new(&["timestamp", "well", "temp_c", "pressure_kpa"]);
    for (d, date) in dates.iter().enumerate() {
        for (w, name) in production.iter().enumerate() {
            s2.row(&[
                date.format("%d/%m/%Y").to_string(),
                name.clone(),
                cell(!drop_cell(cfg.missing_rate), fmt_num(temperature[w][burn + d])),
                cell(!drop_cell(cfg.missing_rate), fmt_num(pressure[w][burn + d])),
            ]);
        }
    }
    // 3: production accounting.
    let mut s3 = CsvOut::new(&["ProdDate", "WellID", "OilVol_m3"]);
    let mut oil_kept = vec![vec![true; n]; np];
    for (d, date) in dates.iter().enumerate() {
        for (w, name) in production.iter().enumerate() {
            oil_kept[w][d] = !drop_cell(cfg.missing_rate);
            s3.row(&[
                date.format("%m/%d/%Y").to_string(),
                name.clone(),
                cell(oil_kept[w][d], fmt_num(recorded[w][d])),
            ]);
        }
    }
    // 4: steam injection.
    let mut s4 = CsvOut::new(&["InjDate", "Injector", "Steam (m3)"]);
    for (d, date) in dates.iter().enumerate() {
        for (j, name) in infill.iter().enumerate() {
            s4.row(&[
                date.format("%Y%m%d").to_string(),
                name.clone(),
                cell(steam_reported[j][d], fmt_num(steam[j][burn + d])),
            ]);
        }
    }
    // 5: weekly well tests re-reporting oil, with occasional sentinel glitches.
    let mut r = rng(cfg.seed, Stream::Tests);
    let mut s5 = CsvOut::new(&["Test Date", "Well", "Test Oil"]);
    for (d, date) in dates.iter().enumerate() {
        for (w, name) in production.iter().enumerate() {
            if (d + w) % 7 != 0 {
                continue;
            }
            let value = if r.random::<f64>() < 0.05 { -999.0 } else { recorded[w][d] };
            s5.row(&[date.format("%Y-%m-%d").to_string(), name.clone(), fmt_num(value)]);
        }
    }

    let sources = vec![
        GeneratedSource {
            name: "operations.csv".into(),
            descriptor: descriptor(
                1,
                "%Y-%m-%d",
                &[
                    ("Date", "date"),
                    ("Well Name", "well_name"),
                    ("Well Status", "well_status"),
                    ("Pump Hours", "pump_hours"),
                ],
            ),
            csv: s1.finish(),
        },
        GeneratedSource {
            name: "sensors.csv".into(),
            descriptor: descriptor(
                2,
                "%d/%m/%Y",
                &[
                    ("timestamp", "date"),
                    ("well", "well_name"),
                    ("temp_c", "sensor:temperature"),
                    ("pressure_kpa", "sensor:pressure"),
                ],
            ),
            csv: s2.finish(),
        },
        GeneratedSource {
            name: "production.csv".into(),
            descriptor: descriptor(
                3,
                "%m/%d/%Y",
                &[("ProdDate", "date"), ("WellID", "well_name"), ("OilVol_m3", "oil_volume")],
            ),
            csv: s3.finish(),
        },
        GeneratedSource {
            name: "steam.csv".into(),
            descriptor: descriptor(
                4,
                "%Y%m%d",
                &[("InjDate", "date"), ("Injector", "well_name"), ("Steam (m3)", "steam_volume")],
            ),
            csv: s4.finish(),
        },
        GeneratedSource {
            name: "well_tests.csv".into(),
            descriptor: descriptor(
                5,
                "%Y-%m-%d",
                &[("Test Date", "date"), ("Well", "well_name"), ("Test Oil", "oil_volume")],
            ),
            csv: s5.finish(),
        },
    ];

    Ok(GeneratedField {
        config: cfg.clone(),
        sources,
        truth,
        true_oil,
        steam: steam.into_iter().map(|s| s[burn..].to_vec()).collect(),
    })
}

/// Absolute noise level equal to `fraction` of the pad's mean noise-free oil.
pub fn relative_noise_sigma(cfg: &FieldConfig, fraction: f64) -> Result<f64> {
    let quiet = FieldConfig {
        noise_sigma: 0.0,
        ..cfg.clone()
    };
    Ok(fraction * generate(&quiet)?.mean_true_oil())
}

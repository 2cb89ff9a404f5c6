//! Randomized pads and future-perturbation checks on the feature builder,
//! shared with the acceptance suite.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use proptest::prelude::*;
use steamflood_core::eval::{holdout_split, time_series_folds};
use steamflood_core::features::{build_matrix, FeatureMatrix, ForecastConfig, SteamWide};
use steamflood_core::ingest::{PadTable, RawRecord, WellInfo, WellKind, WellStatus};

pub const N_PROD: usize = 2;
pub const N_INFILL: usize = 2;

#[derive(Debug, Clone)]
pub struct Pad {
    pub n_days: usize,
    pub steam: Vec<f64>,
    pub temp: Vec<f64>,
    pub oil: Vec<f64>,
    pub shut: Vec<bool>,
    pub hours: Vec<f64>,
}

pub fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

pub fn pad(min_days: usize) -> impl Strategy<Value = Pad> {
    (min_days..min_days + 30).prop_flat_map(|n| {
        let cells = n * N_PROD;
        (
            prop::collection::vec(0.0f64..100.0, n * N_INFILL),
            prop::collection::vec(150.0f64..250.0, cells),
            prop::collection::vec(0.0f64..40.0, cells),
            prop::collection::vec(prop::bool::weighted(0.2), cells),
            prop::collection::vec(0.0f64..24.0, cells),
        )
            .prop_map(move |(steam, temp, oil, shut, hours)| Pad {
                n_days: n,
                steam,
                temp,
                oil,
                shut,
                hours,
            })
    })
}

pub fn tables(p: &Pad) -> (SteamWide, PadTable) {
    let dates: Vec<NaiveDate> = start().iter_days().take(p.n_days).collect();
    let steam = SteamWide {
        dates: dates.clone(),
        columns: (1..=N_INFILL).map(|i| format!("Infill Well {i}")).collect(),
        values: p.steam.clone(),
    };
    let mut rows = Vec::new();
    for w in 0..N_PROD {
        for (d, date) in dates.iter().enumerate() {
            let i = w * p.n_days + d;
            // Day 0 pins both status levels so perturbations never add a column.
            let shut = if d == 0 { w == 1 } else { p.shut[i] };
            rows.push(RawRecord {
                well_status: Some(if shut { WellStatus::ShutIn } else { WellStatus::Pump }),
                sensors: BTreeMap::from([("temperature".to_string(), Some(p.temp[i]))]),
                oil_volume: Some(p.oil[i]),
                pump_hours: Some(if shut { 0.0 } else { p.hours[i] }),
                ..RawRecord::empty(*date, format!("Production Well {}", w + 1))
            });
        }
    }
    let wells = (1..=N_PROD)
        .map(|i| WellInfo {
            name: format!("Production Well {i}"),
            kind: WellKind::Production,
        })
        .collect();
    let table = PadTable::from_dense("pad", start(), wells, vec!["temperature".into()], true, rows);
    (steam, table)
}

pub fn row_of<'a>(m: &'a FeatureMatrix, date: NaiveDate, well: &str) -> &'a [f64] {
    let i = m
        .keys
        .iter()
        .position(|k| k.date == date && k.well == well)
        .expect("row present");
    m.x.row(i)
}

pub fn config() -> impl Strategy<Value = ForecastConfig> {
    (1usize..=6, 1usize..=6, any::<bool>()).prop_map(|(t, k, include_oil_lags)| ForecastConfig { t, k, include_oil_lags })
}

pub fn steam_case(p: &Pad, cfg: ForecastConfig, pick: prop::sample::Index, noise: &[f64]) -> Result<(), TestCaseError> {
    let (steam, prod) = tables(p);
    let base = build_matrix(&steam, &prod, cfg).unwrap();
    let day = cfg.max_lag() + pick.index(p.n_days - cfg.max_lag());
    let date = start() + chrono::Duration::days(day as i64);

    let mut moved = steam.clone();
    let mut i = 0;
    for d in (0..p.n_days).filter(|&d| d >= day || d + cfg.t < day) {
        for x in 0..N_INFILL {
            moved.set(d, x, noise[i % noise.len()]);
            i += 1;
        }
    }
    let after = build_matrix(&moved, &prod, cfg).unwrap();
    for w in 0..N_PROD {
        let well = format!("Production Well {}", w + 1);
        let (a, b) = (row_of(&base, date, &well), row_of(&after, date, &well));
        prop_assert_eq!(a, b);
        // Alignment: steam lag m of row D is SteamWide[D - m] exactly.
        for m in 1..=cfg.t {
            for x in 0..N_INFILL {
                prop_assert_eq!(a[base.spec.steam_col(m, x)].to_bits(), steam.get(day - m, x).to_bits());
            }
        }
    }
    Ok(())
}

pub fn production_case(p: &Pad, cfg: ForecastConfig, pick: prop::sample::Index, seed: u64) -> Result<(), TestCaseError> {
    let (steam, prod) = tables(p);
    let base = build_matrix(&steam, &prod, cfg).unwrap();
    let day = cfg.max_lag() + pick.index(p.n_days - cfg.max_lag());
    let date = start() + chrono::Duration::days(day as i64);

    // Lags below t + 1 are days D - t ..= D; later days are perturbed too.
    let mut q = p.clone();
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    for w in 0..N_PROD {
        for d in day - cfg.t..p.n_days {
            let i = w * p.n_days + d;
            q.temp[i] = 150.0 + 100.0 * next();
            q.oil[i] = 40.0 * next();
            q.shut[i] = next() < 0.5;
            q.hours[i] = 24.0 * next();
        }
    }
    let (_, prod2) = tables(&q);
    let after = build_matrix(&steam, &prod2, cfg).unwrap();
    prop_assert_eq!(&base.spec.names, &after.spec.names);
    for w in 0..N_PROD {
        let well = format!("Production Well {}", w + 1);
        prop_assert_eq!(row_of(&base, date, &well), row_of(&after, date, &well));
    }
    Ok(())
}

pub fn splits_case(p: &Pad, t: usize, k: usize, n_folds: usize, frac: f64) -> Result<(), TestCaseError> {
    let (steam, prod) = tables(p);
    let m = build_matrix(&steam, &prod, ForecastConfig { t, k, include_oil_lags: false }).unwrap();
    let (train, test) = holdout_split(&m, frac).unwrap();
    let last_train = train.keys.iter().map(|k| k.date).max().unwrap();
    let first_test = test.keys.iter().map(|k| k.date).min().unwrap();
    prop_assert!(last_train < first_test);
    prop_assert_eq!(train.n_rows() + test.n_rows(), m.n_rows());

    let dates = train.distinct_dates();
    if dates.len() <= n_folds {
        return Ok(());
    }
    let plan = time_series_folds(&dates, n_folds).unwrap();
    prop_assert_eq!(plan.folds.len(), n_folds);
    for f in &plan.folds {
        let train_max = dates.iter().filter(|d| f.is_train(**d)).max().unwrap();
        let valid_min = dates.iter().filter(|d| f.is_valid(**d)).min().unwrap();
        prop_assert!(train_max < valid_min);
        prop_assert!(dates.iter().all(|d| !(f.is_train(*d) && f.is_valid(*d))));
    }
    Ok(())
}

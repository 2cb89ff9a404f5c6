//! Per-source CSV parsing, pad-level consolidation and missing-data imputation.
//!
//! Every source is mapped onto one canonical daily record per (date, well).
//! Canonical field names used in [`SourceDescriptor::column_map`]:
//!
//! * `date`, `well_name` (required)
//! * `well_status`, `steam_volume`, `oil_volume`, `pump_hours`
//! * `sensor:<name>` for each sensor channel

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source {source_id}: mapped column `{column}` not found in header")]
    MissingColumn { source_id: u8, column: String },
    #[error("source {source_id}: column map must cover `{field}`")]
    IncompleteColumnMap { source_id: u8, field: &'static str },
    #[error("source {source_id}: unknown canonical field `{field}`")]
    UnknownField { source_id: u8, field: String },
    #[error("source {source_id}, line {line}: cannot parse date `{value}`")]
    BadDate {
        source_id: u8,
        line: u64,
        value: String,
    },
    #[error("source {source_id}, line {line}: empty well name")]
    EmptyWellName { source_id: u8, line: u64 },
    #[error("duplicate source id {0}")]
    DuplicateSource(u8),
    #[error("well `{0}` carries both steam and production data")]
    KindConflict(String),
    #[error("cannot infer the kind of well `{0}`: no steam or production data")]
    UnknownKind(String),
    #[error("no records to consolidate")]
    EmptyInput,
    #[error("well `{well}` has no observed `{field}` values to copy from")]
    AllMissingSeries { well: String, field: String },
    #[error("invalid imputation policy: {0}")]
    InvalidPolicy(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// Describes how one raw source file maps onto canonical fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDescriptor {
    pub source_id: u8,
    /// Source column name -> canonical field name.
    pub column_map: BTreeMap<String, String>,
    /// chrono format string, e.g. `%m/%d/%Y`.
    pub date_format: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WellStatus {
    Pump,
    ShutIn,
    Other(String),
}

impl WellStatus {
    pub fn parse(label: &str) -> Option<Self> {
        let label = label.trim();
        if label.is_empty() || label.eq_ignore_ascii_case("na") {
            return None;
        }
        let norm: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match norm.as_str() {
            "pump" | "pumping" => WellStatus::Pump,
            "shutin" => WellStatus::ShutIn,
            _ => WellStatus::Other(label.to_string()),
        })
    }

    pub fn label(&self) -> &str {
        match self {
            WellStatus::Pump => "Pump",
            WellStatus::ShutIn => "Shut-In",
            WellStatus::Other(s) => s,
        }
    }
}

impl fmt::Display for WellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WellKind {
    Infill,
    Production,
}

impl WellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WellKind::Infill => "infill",
            WellKind::Production => "production",
        }
    }
}

/// One canonical daily record for one well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub well_name: String,
    pub well_status: Option<WellStatus>,
    pub sensors: BTreeMap<String, Option<f64>>,
    pub steam_volume: Option<f64>,
    pub oil_volume: Option<f64>,
    pub pump_hours: Option<f64>,
}

impl RawRecord {
    pub fn empty(date: NaiveDate, well_name: impl Into<String>) -> Self {
        Self {
            date,
            well_name: well_name.into(),
            well_status: None,
            sensors: BTreeMap::new(),
            steam_volume: None,
            oil_volume: None,
            pump_hours: None,
        }
    }

    fn has_production_data(&self) -> bool {
        self.oil_volume.is_some()
            || self.well_status.is_some()
            || self.pump_hours.is_some()
            || self.sensors.values().any(Option::is_some)
    }

    /// Field-wise merge: every non-missing field of `other` overwrites `self`.
    fn merge_from(&mut self, other: &RawRecord) {
        if other.well_status.is_some() {
            self.well_status = other.well_status.clone();
        }
        for (name, value) in &other.sensors {
            match value {
                Some(v) => {
                    self.sensors.insert(name.clone(), Some(*v));
                }
                None => {
                    self.sensors.entry(name.clone()).or_insert(None);
                }
            }
        }
        if other.steam_volume.is_some() {
            self.steam_volume = other.steam_volume;
        }
        if other.oil_volume.is_some() {
            self.oil_volume = other.oil_volume;
        }
        if other.pump_hours.is_some() {
            self.pump_hours = other.pump_hours;
        }
    }
}

/// A cell changed by error correction (negative volume forced to missing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub date: NaiveDate,
    pub well: String,
    pub field: String,
    pub original: f64,
    pub source_id: Option<u8>,
    pub line: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedSource {
    pub source_id: u8,
    pub records: Vec<RawRecord>,
    pub corrections: Vec<Correction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Canonical {
    Date,
    WellName,
    Status,
    Steam,
    Oil,
    PumpHours,
    Sensor(String),
}

fn canonical(source_id: u8, field: &str) -> Result<Canonical> {
    Ok(match field {
        "date" => Canonical::Date,
        "well_name" => Canonical::WellName,
        "well_status" => Canonical::Status,
        "steam_volume" => Canonical::Steam,
        "oil_volume" => Canonical::Oil,
        "pump_hours" => Canonical::PumpHours,
        other => match other.strip_prefix("sensor:") {
            Some(name) if !name.is_empty() => Canonical::Sensor(name.to_string()),
            _ => {
                return Err(IngestError::UnknownField {
                    source_id,
                    field: other.to_string(),
                })
            }
        },
    })
}

fn parse_number(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return None;
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Negative volumes are physically impossible; they become missing and are logged.
fn clip_volume(
    value: Option<f64>,
    field: &str,
    date: NaiveDate,
    well: &str,
    origin: (Option<u8>, Option<u64>),
    log: &mut Vec<Correction>,
) -> Option<f64> {
    match value {
        Some(v) if v < 0.0 => {
            log.push(Correction {
                date,
                well: well.to_string(),
                field: field.to_string(),
                original: v,
                source_id: origin.0,
                line: origin.1,
            });
            None
        }
        other => other,
    }
}

/// Parses one header-bearing CSV source into canonical records.
///
/// Unparseable numeric cells become missing. A bad date rejects the whole
/// source with the offending line number.
pub fn parse_source<R: Read>(stream: R, desc: &SourceDescriptor) -> Result<ParsedSource> {
    let sid = desc.source_id;
    let mut mapping: Vec<(String, Canonical)> = Vec::with_capacity(desc.column_map.len());
    for (column, field) in &desc.column_map {
        mapping.push((column.clone(), canonical(sid, field)?));
    }
    for (required, field) in [(Canonical::Date, "date"), (Canonical::WellName, "well_name")] {
        if !mapping.iter().any(|(_, c)| *c == required) {
            return Err(IngestError::IncompleteColumnMap { source_id: sid, field });
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(stream);
    let header = reader.headers()?.clone();
    let mut columns: Vec<(usize, Canonical)> = Vec::with_capacity(mapping.len());
    for (column, field) in mapping {
        let idx = header
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| IngestError::MissingColumn {
                source_id: sid,
                column: column.clone(),
            })?;
        columns.push((idx, field));
    }

    let mut out = ParsedSource {
        source_id: sid,
        ..Default::default()
    };
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let cell = |idx: usize| row.get(idx).unwrap_or("");

        let mut date = None;
        let mut well = None;
        for (idx, field) in &columns {
            match field {
                Canonical::Date => {
                    let raw = cell(*idx);
                    date = Some(NaiveDate::parse_from_str(raw, &desc.date_format).map_err(
                        |_| IngestError::BadDate {
                            source_id: sid,
                            line,
                            value: raw.to_string(),
                        },
                    )?);
                }
                Canonical::WellName => well = Some(cell(*idx).to_string()),
                _ => {}
            }
        }
        let (date, well) = (date.expect("date mapped"), well.expect("well mapped"));
        if well.is_empty() {
            return Err(IngestError::EmptyWellName { source_id: sid, line });
        }

        let mut rec = RawRecord::empty(date, well);
        let origin = (Some(sid), Some(line));
        for (idx, field) in &columns {
            let raw = cell(*idx);
            match field {
                Canonical::Date | Canonical::WellName => {}
                Canonical::Status => rec.well_status = WellStatus::parse(raw),
                Canonical::Steam => {
                    rec.steam_volume = clip_volume(
                        parse_number(raw),
                        "steam_volume",
                        date,
                        &rec.well_name,
                        origin,
                        &mut out.corrections,
                    )
                }
                Canonical::Oil => {
                    rec.oil_volume = clip_volume(
                        parse_number(raw),
                        "oil_volume",
                        date,
                        &rec.well_name,
                        origin,
                        &mut out.corrections,
                    )
                }
                Canonical::PumpHours => {
                    rec.pump_hours = clip_volume(
                        parse_number(raw),
                        "pump_hours",
                        date,
                        &rec.well_name,
                        origin,
                        &mut out.corrections,
                    )
                }
                Canonical::Sensor(name) => {
                    rec.sensors.insert(name.clone(), parse_number(raw));
                }
            }
        }
        out.records.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellInfo {
    pub name: String,
    pub kind: WellKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillMethod {
    ForwardThenBackwardCopy,
    ZeroFill,
}

impl FillMethod {
    fn as_str(self) -> &'static str {
        match self {
            FillMethod::ForwardThenBackwardCopy => "forward_copy",
            FillMethod::ZeroFill => "zero_fill",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationEntry {
    pub date: NaiveDate,
    pub well: String,
    pub field: String,
    pub method: String,
}

/// Consolidated daily table for one pad: exactly one record per (date, well).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadTable {
    pub pad_id: String,
    pub date_min: NaiveDate,
    pub date_max: NaiveDate,
    /// Sorted by well name.
    pub wells: Vec<WellInfo>,
    /// Sorted sensor channel names seen on production wells.
    pub sensor_names: Vec<String>,
    pub has_pump_hours: bool,
    /// Well-major: `rows[well * n_days + day]`.
    rows: Vec<RawRecord>,
    pub corrections: Vec<Correction>,
    pub imputation_log: Vec<ImputationEntry>,
}

impl PadTable {
    pub fn n_days(&self) -> usize {
        (self.date_max - self.date_min).num_days() as usize + 1
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.date_min.iter_days().take(self.n_days())
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.date_min).num_days();
        (d >= 0 && (d as usize) < self.n_days()).then_some(d as usize)
    }

    pub fn well_index(&self, name: &str) -> Option<usize> {
        self.wells.binary_search_by(|w| w.name.as_str().cmp(name)).ok()
    }

    pub fn rows(&self) -> &[RawRecord] {
        &self.rows
    }

    pub fn record(&self, well: usize, day: usize) -> &RawRecord {
        &self.rows[well * self.n_days() + day]
    }

    pub fn well_rows(&self, well: usize) -> &[RawRecord] {
        let n = self.n_days();
        &self.rows[well * n..(well + 1) * n]
    }

    pub fn wells_of_kind(&self, kind: WellKind) -> impl Iterator<Item = (usize, &WellInfo)> {
        self.wells
            .iter()
            .enumerate()
            .filter(move |(_, w)| w.kind == kind)
    }

    /// Keeps only the wells of `kind`, preserving the date grid and logs for those wells.
    pub fn subset(&self, kind: WellKind) -> PadTable {
        let mut wells = Vec::new();
        let mut rows = Vec::new();
        for (i, w) in self.wells_of_kind(kind) {
            wells.push(w.clone());
            rows.extend_from_slice(self.well_rows(i));
        }
        let keep = |name: &str| wells.iter().any(|w: &WellInfo| w.name == name);
        PadTable {
            pad_id: self.pad_id.clone(),
            date_min: self.date_min,
            date_max: self.date_max,
            sensor_names: if kind == WellKind::Production {
                self.sensor_names.clone()
            } else {
                Vec::new()
            },
            has_pump_hours: self.has_pump_hours && kind == WellKind::Production,
            corrections: self
                .corrections
                .iter()
                .filter(|c| keep(&c.well))
                .cloned()
                .collect(),
            imputation_log: self
                .imputation_log
                .iter()
                .filter(|e| keep(&e.well))
                .cloned()
                .collect(),
            wells,
            rows,
        }
    }

    /// Builds a table from already-dense rows (well-major, sorted wells).
    pub fn from_dense(
        pad_id: impl Into<String>,
        date_min: NaiveDate,
        wells: Vec<WellInfo>,
        sensor_names: Vec<String>,
        has_pump_hours: bool,
        rows: Vec<RawRecord>,
    ) -> Self {
        let n_days = if wells.is_empty() { 0 } else { rows.len() / wells.len() };
        assert_eq!(rows.len(), n_days * wells.len(), "rows must be dense");
        assert!(n_days > 0, "empty date grid");
        PadTable {
            pad_id: pad_id.into(),
            date_min,
            date_max: date_min + chrono::Duration::days(n_days as i64 - 1),
            wells,
            sensor_names,
            has_pump_hours,
            rows,
            corrections: Vec::new(),
            imputation_log: Vec::new(),
        }
    }

    /// Canonical CSV: date, well_name, kind, well_status, sensor_<name>..., steam_volume,
    /// oil_volume[, pump_hours]. Missing cells are empty.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = vec!["date".into(), "well_name".into(), "kind".into(), "well_status".into()];
        header.extend(self.sensor_names.iter().map(|s| format!("sensor_{s}")));
        header.push("steam_volume".into());
        header.push("oil_volume".into());
        if self.has_pump_hours {
            header.push("pump_hours".into());
        }
        w.write_record(&header)?;
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, info) in self.wells.iter().enumerate() {
            for rec in self.well_rows(i) {
                let mut line = vec![
                    rec.date.to_string(),
                    rec.well_name.clone(),
                    info.kind.as_str().to_string(),
                    rec.well_status.as_ref().map(|s| s.label().to_string()).unwrap_or_default(),
                ];
                for s in &self.sensor_names {
                    line.push(num(rec.sensors.get(s).copied().flatten()));
                }
                line.push(num(rec.steam_volume));
                line.push(num(rec.oil_volume));
                if self.has_pump_hours {
                    line.push(num(rec.pump_hours));
                }
                w.write_record(&line)?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_imputation_log_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "well", "field", "method"])?;
        for e in &self.imputation_log {
            w.write_record([e.date.to_string().as_str(), &e.well, &e.field, &e.method])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_corrections_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "well", "field", "original", "source_id", "line"])?;
        for c in &self.corrections {
            w.write_record([
                c.date.to_string(),
                c.well.clone(),
                c.field.clone(),
                c.original.to_string(),
                c.source_id.map(|s| s.to_string()).unwrap_or_default(),
                c.line.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Merges per-source records into one dense pad table.
///
/// Duplicate (date, well) records are merged field by field; for each field
/// the last source (and within a source the last line) holding a value wins.
/// Missing days are densified with all-missing rows over the pad-global range.
pub fn consolidate(sources: &[Vec<RawRecord>], pad_id: &str) -> Result<PadTable> {
    let mut corrections = Vec::new();
    let mut merged: BTreeMap<(String, NaiveDate), RawRecord> = BTreeMap::new();
    let mut sensor_names = BTreeSet::new();
    let mut has_pump_hours = false;

    for source in sources {
        for rec in source {
            let mut rec = rec.clone();
            let origin = (None, None);
            rec.steam_volume = clip_volume(rec.steam_volume, "steam_volume", rec.date, &rec.well_name, origin, &mut corrections);
            rec.oil_volume = clip_volume(rec.oil_volume, "oil_volume", rec.date, &rec.well_name, origin, &mut corrections);
            rec.pump_hours = clip_volume(rec.pump_hours, "pump_hours", rec.date, &rec.well_name, origin, &mut corrections);
            sensor_names.extend(rec.sensors.keys().cloned());
            has_pump_hours |= rec.pump_hours.is_some();
            merged
                .entry((rec.well_name.clone(), rec.date))
                .and_modify(|m| m.merge_from(&rec))
                .or_insert(rec);
        }
    }
    if merged.is_empty() {
        return Err(IngestError::EmptyInput);
    }

    let mut kinds: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
    for rec in merged.values() {
        let entry = kinds.entry(rec.well_name.as_str()).or_default();
        entry.0 |= rec.steam_volume.is_some();
        entry.1 |= rec.has_production_data();
    }
    let mut wells = Vec::with_capacity(kinds.len());
    for (name, (steam, prod)) in kinds {
        let kind = match (steam, prod) {
            (true, true) => return Err(IngestError::KindConflict(name.to_string())),
            (true, false) => WellKind::Infill,
            (false, true) => WellKind::Production,
            (false, false) => return Err(IngestError::UnknownKind(name.to_string())),
        };
        wells.push(WellInfo {
            name: name.to_string(),
            kind,
        });
    }

    let date_min = merged.keys().map(|(_, d)| *d).min().expect("non-empty");
    let date_max = merged.keys().map(|(_, d)| *d).max().expect("non-empty");
    let n_days = (date_max - date_min).num_days() as usize + 1;
    let sensor_names: Vec<String> = sensor_names.into_iter().collect();

    let mut rows = Vec::with_capacity(n_days * wells.len());
    for info in &wells {
        for date in date_min.iter_days().take(n_days) {
            let mut rec = merged
                .remove(&(info.name.clone(), date))
                .unwrap_or_else(|| RawRecord::empty(date, info.name.clone()));
            if info.kind == WellKind::Production {
                for s in &sensor_names {
                    rec.sensors.entry(s.clone()).or_insert(None);
                }
            }
            rows.push(rec);
        }
    }

    Ok(PadTable {
        pad_id: pad_id.to_string(),
        date_min,
        date_max,
        wells,
        sensor_names,
        has_pump_hours,
        rows,
        corrections,
        imputation_log: Vec::new(),
    })
}

/// Per-field imputation methods. The target (`oil_volume`) is never imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputePolicy {
    pub well_status: FillMethod,
    pub steam_volume: FillMethod,
    pub pump_hours: FillMethod,
    pub sensors: FillMethod,
    /// Per-sensor overrides keyed by sensor name.
    pub sensor_overrides: BTreeMap<String, FillMethod>,
}

impl Default for ImputePolicy {
    fn default() -> Self {
        Self {
            well_status: FillMethod::ForwardThenBackwardCopy,
            steam_volume: FillMethod::ZeroFill,
            pump_hours: FillMethod::ForwardThenBackwardCopy,
            sensors: FillMethod::ForwardThenBackwardCopy,
            sensor_overrides: BTreeMap::new(),
        }
    }
}

impl ImputePolicy {
    pub fn sensor(&self, name: &str) -> FillMethod {
        self.sensor_overrides.get(name).copied().unwrap_or(self.sensors)
    }
}

/// Forward copy then backward copy of leading gaps. Returns the filled
/// positions, or `None` when the series has no observed value at all.
pub fn fill_forward_backward<T: Clone>(series: &mut [Option<T>]) -> Option<Vec<usize>> {
    let first = series.iter().position(Option::is_some)?;
    let mut filled = Vec::new();
    let mut last = series[first].clone();
    for (i, cell) in series.iter_mut().enumerate().skip(first) {
        match cell {
            Some(v) => last = Some(v.clone()),
            None => {
                *cell = last.clone();
                filled.push(i);
            }
        }
    }
    let lead = series[first].clone();
    for (i, cell) in series.iter_mut().enumerate().take(first) {
        *cell = lead.clone();
        filled.push(i);
    }
    filled.sort_unstable();
    Some(filled)
}

fn fill_zero(series: &mut [Option<f64>]) -> Vec<usize> {
    let mut filled = Vec::new();
    for (i, cell) in series.iter_mut().enumerate() {
        if cell.is_none() {
            *cell = Some(0.0);
            filled.push(i);
        }
    }
    filled
}

fn fill_numeric(series: &mut [Option<f64>], method: FillMethod, well: &str, field: &str) -> Result<Vec<usize>> {
    match method {
        FillMethod::ZeroFill => Ok(fill_zero(series)),
        FillMethod::ForwardThenBackwardCopy => {
            fill_forward_backward(series).ok_or_else(|| IngestError::AllMissingSeries {
                well: well.to_string(),
                field: field.to_string(),
            })
        }
    }
}

/// Fills every missing retained cell per the policy and logs each fill.
///
/// Infill wells retain `steam_volume`; production wells retain status,
/// sensors and (when the pad reports it) pump hours. `oil_volume` is left untouched.
pub fn impute(table: &PadTable, policy: &ImputePolicy) -> Result<PadTable> {
    if policy.well_status == FillMethod::ZeroFill {
        return Err(IngestError::InvalidPolicy(
            "well_status is categorical and cannot be zero-filled".into(),
        ));
    }
    let mut out = table.clone();
    let n_days = table.n_days();
    let mut log = Vec::new();

    for (w, info) in table.wells.iter().enumerate() {
        let base = w * n_days;
        let rows = &mut out.rows[base..base + n_days];
        let mut record = |field: &str, method: FillMethod, days: Vec<usize>, rows: &[RawRecord]| {
            for d in days {
                log.push(ImputationEntry {
                    date: rows[d].date,
                    well: info.name.clone(),
                    field: field.to_string(),
                    method: method.as_str().to_string(),
                });
            }
        };
        match info.kind {
            WellKind::Infill => {
                let mut series: Vec<Option<f64>> = rows.iter().map(|r| r.steam_volume).collect();
                let days = fill_numeric(&mut series, policy.steam_volume, &info.name, "steam_volume")?;
                for (r, v) in rows.iter_mut().zip(series) {
                    r.steam_volume = v;
                }
                record("steam_volume", policy.steam_volume, days, rows);
            }
            WellKind::Production => {
                let mut status: Vec<Option<WellStatus>> = rows.iter().map(|r| r.well_status.clone()).collect();
                let days = fill_forward_backward(&mut status).ok_or_else(|| IngestError::AllMissingSeries {
                    well: info.name.clone(),
                    field: "well_status".into(),
                })?;
                for (r, v) in rows.iter_mut().zip(status) {
                    r.well_status = v;
                }
                record("well_status", policy.well_status, days, rows);

                for name in &table.sensor_names {
                    let field = format!("sensor:{name}");
                    let method = policy.sensor(name);
                    let mut series: Vec<Option<f64>> =
                        rows.iter().map(|r| r.sensors.get(name).copied().flatten()).collect();
                    let days = fill_numeric(&mut series, method, &info.name, &field)?;
                    for (r, v) in rows.iter_mut().zip(series) {
                        r.sensors.insert(name.clone(), v);
                    }
                    record(&field, method, days, rows);
                }

                if table.has_pump_hours {
                    let mut series: Vec<Option<f64>> = rows.iter().map(|r| r.pump_hours).collect();
                    let days = fill_numeric(&mut series, policy.pump_hours, &info.name, "pump_hours")?;
                    for (r, v) in rows.iter_mut().zip(series) {
                        r.pump_hours = v;
                    }
                    record("pump_hours", policy.pump_hours, days, rows);
                }
            }
        }
    }
    out.imputation_log.extend(log);
    Ok(out)
}

/// Parses every source (concurrently), consolidates, and imputes.
pub fn ingest_sources(
    inputs: Vec<(SourceDescriptor, Vec<u8>)>,
    pad_id: &str,
    policy: &ImputePolicy,
) -> Result<PadTable> {
    use rayon::prelude::*;
    let mut seen = HashMap::new();
    for (desc, _) in &inputs {
        if seen.insert(desc.source_id, ()).is_some() {
            return Err(IngestError::DuplicateSource(desc.source_id));
        }
    }
    let parsed: Vec<ParsedSource> = inputs
        .par_iter()
        .map(|(desc, bytes)| parse_source(bytes.as_slice(), desc))
        .collect::<Result<_>>()?;
    let records: Vec<Vec<RawRecord>> = parsed.iter().map(|p| p.records.clone()).collect();
    let mut table = consolidate(&records, pad_id)?;
    let mut corrections: Vec<Correction> = parsed.into_iter().flat_map(|p| p.corrections).collect();
    corrections.append(&mut table.corrections);
    table.corrections = corrections;
    impute(&table, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn table1_desc() -> SourceDescriptor {
        SourceDescriptor {
            source_id: 1,
            column_map: [
                ("Date", "date"),
                ("Well Name", "well_name"),
                ("Well Status", "well_status"),
                ("Sensor Data", "sensor:temperature"),
                ("Steam Volume", "steam_volume"),
                ("Oil Volume", "oil_volume"),
            ]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
            date_format: "%m/%d/%Y".into(),
        }
    }

    const HEADER: &str = "Date,Well Name,Well Status,Sensor Data,Steam Volume,Oil Volume\n";

    #[test]
    fn parses_first_table_row() {
        let csv = format!("{HEADER}4/17/2019,Prod Well 1,Pump,100,,23\n");
        let parsed = parse_source(csv.as_bytes(), &table1_desc()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let r = &parsed.records[0];
        assert_eq!(r.date, d(2019, 4, 17));
        assert_eq!(r.well_name, "Prod Well 1");
        assert_eq!(r.well_status, Some(WellStatus::Pump));
        assert_eq!(r.sensors["temperature"], Some(100.0));
        assert_eq!(r.steam_volume, None);
        assert_eq!(r.oil_volume, Some(23.0));
    }

    #[test]
    fn header_only_gives_no_records() {
        let parsed = parse_source(HEADER.as_bytes(), &table1_desc()).unwrap();
        assert!(parsed.records.is_empty());
    }

    #[test]
    fn negative_volume_becomes_missing_and_is_logged() {
        let csv = format!("{HEADER}4/17/2019,Prod Well 1,Pump,100,,-5\n");
        let parsed = parse_source(csv.as_bytes(), &table1_desc()).unwrap();
        assert_eq!(parsed.records[0].oil_volume, None);
        assert_eq!(parsed.corrections.len(), 1);
        assert_eq!(parsed.corrections[0].field, "oil_volume");
        assert_eq!(parsed.corrections[0].original, -5.0);
        assert_eq!(parsed.corrections[0].line, Some(2));
    }

    #[test]
    fn garbage_numbers_become_missing() {
        let csv = format!("{HEADER}4/18/2019,Prod Well 1,Shut-In,n/a,,x\n");
        let parsed = parse_source(csv.as_bytes(), &table1_desc()).unwrap();
        let r = &parsed.records[0];
        assert_eq!(r.well_status, Some(WellStatus::ShutIn));
        assert_eq!(r.sensors["temperature"], None);
        assert_eq!(r.oil_volume, None);
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "Date,Well Name\n4/17/2019,Prod Well 1\n";
        let err = parse_source(csv.as_bytes(), &table1_desc()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref column, .. } if column == "Oil Volume"));
    }

    #[test]
    fn bad_date_reports_line() {
        let csv = format!("{HEADER}4/17/2019,Prod Well 1,Pump,100,,23\n2019-04-18,Prod Well 1,Pump,1,,2\n");
        let err = parse_source(csv.as_bytes(), &table1_desc()).unwrap_err();
        assert!(matches!(err, IngestError::BadDate { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn disjoint_sources_merge_into_one_row() {
        let mut a = RawRecord::empty(d(2019, 4, 17), "Prod Well 1");
        a.oil_volume = Some(23.0);
        let mut b = RawRecord::empty(d(2019, 4, 17), "Prod Well 1");
        b.well_status = Some(WellStatus::Pump);
        let t = consolidate(&[vec![a], vec![b]], "pad").unwrap();
        assert_eq!(t.rows().len(), 1);
        let r = t.record(0, 0);
        assert_eq!(r.oil_volume, Some(23.0));
        assert_eq!(r.well_status, Some(WellStatus::Pump));
    }

    #[test]
    fn last_source_wins_per_field() {
        let mut a = RawRecord::empty(d(2019, 4, 17), "P");
        a.oil_volume = Some(1.0);
        a.well_status = Some(WellStatus::Pump);
        let mut b = RawRecord::empty(d(2019, 4, 17), "P");
        b.oil_volume = Some(2.0);
        let t = consolidate(&[vec![a], vec![b]], "pad").unwrap();
        assert_eq!(t.record(0, 0).oil_volume, Some(2.0));
        assert_eq!(t.record(0, 0).well_status, Some(WellStatus::Pump));
    }

    #[test]
    fn gaps_are_densified() {
        let mut a = RawRecord::empty(d(2019, 4, 17), "P");
        a.oil_volume = Some(1.0);
        let mut b = RawRecord::empty(d(2019, 4, 19), "P");
        b.oil_volume = Some(3.0);
        let t = consolidate(&[vec![a, b]], "pad").unwrap();
        assert_eq!(t.n_days(), 3);
        let mid = t.record(0, 1);
        assert_eq!(mid.date, d(2019, 4, 18));
        assert_eq!(mid.oil_volume, None);
        assert_eq!(mid.well_status, None);
    }

    #[test]
    fn steam_and_oil_on_one_well_conflict() {
        let mut a = RawRecord::empty(d(2019, 4, 17), "W");
        a.steam_volume = Some(6.0);
        let mut b = RawRecord::empty(d(2019, 4, 18), "W");
        b.oil_volume = Some(3.0);
        let err = consolidate(&[vec![a], vec![b]], "pad").unwrap_err();
        assert!(matches!(err, IngestError::KindConflict(ref w) if w == "W"));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(consolidate(&[], "pad"), Err(IngestError::EmptyInput)));
        assert!(matches!(consolidate(&[vec![]], "pad"), Err(IngestError::EmptyInput)));
    }

    fn production_series(values: &[Option<f64>]) -> PadTable {
        let recs: Vec<RawRecord> = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut r = RawRecord::empty(d(2019, 1, 1) + chrono::Duration::days(i as i64), "P");
                r.well_status = Some(WellStatus::Pump);
                r.oil_volume = Some(1.0);
                r.sensors.insert("s".into(), *v);
                r
            })
            .collect();
        consolidate(&[recs], "pad").unwrap()
    }

    fn sensor_values(t: &PadTable) -> Vec<f64> {
        t.well_rows(0).iter().map(|r| r.sensors["s"].unwrap()).collect()
    }

    #[test]
    fn forward_copy_fills_interior_gaps() {
        let t = production_series(&[Some(1.0), None, None, Some(4.0)]);
        let out = impute(&t, &ImputePolicy::default()).unwrap();
        assert_eq!(sensor_values(&out), vec![1.0, 1.0, 1.0, 4.0]);
        assert_eq!(out.imputation_log.len(), 2);
    }

    #[test]
    fn backward_copy_fills_leading_gap() {
        let t = production_series(&[None, Some(5.0), Some(6.0)]);
        let out = impute(&t, &ImputePolicy::default()).unwrap();
        assert_eq!(sensor_values(&out), vec![5.0, 5.0, 6.0]);
    }

    #[test]
    fn zero_fill_for_steam() {
        let mut b = RawRecord::empty(d(2019, 1, 2), "I");
        b.steam_volume = Some(7.0);
        let a = RawRecord::empty(d(2019, 1, 1), "I");
        let mut p = RawRecord::empty(d(2019, 1, 1), "P");
        p.well_status = Some(WellStatus::Pump);
        let t = consolidate(&[vec![a, b, p]], "pad").unwrap();
        let out = impute(&t, &ImputePolicy::default()).unwrap();
        let i = out.well_index("I").unwrap();
        let steam: Vec<f64> = out.well_rows(i).iter().map(|r| r.steam_volume.unwrap()).collect();
        assert_eq!(steam, vec![0.0, 7.0]);
    }

    #[test]
    fn all_missing_sensor_series_is_an_error() {
        let t = production_series(&[None, None]);
        let err = impute(&t, &ImputePolicy::default()).unwrap_err();
        assert!(matches!(err, IngestError::AllMissingSeries { ref field, .. } if field == "sensor:s"));
    }

    #[test]
    fn oil_is_never_imputed() {
        let mut a = RawRecord::empty(d(2019, 1, 1), "P");
        a.well_status = Some(WellStatus::Pump);
        a.oil_volume = Some(3.0);
        let b = RawRecord::empty(d(2019, 1, 2), "P");
        let t = consolidate(&[vec![a, b]], "pad").unwrap();
        let out = impute(&t, &ImputePolicy::default()).unwrap();
        assert_eq!(out.record(0, 1).oil_volume, None);
        assert_eq!(out.record(0, 1).well_status, Some(WellStatus::Pump));
    }

    #[test]
    fn status_zero_fill_is_rejected() {
        let t = production_series(&[Some(1.0)]);
        let policy = ImputePolicy {
            well_status: FillMethod::ZeroFill,
            ..Default::default()
        };
        assert!(matches!(impute(&t, &policy), Err(IngestError::InvalidPolicy(_))));
    }
}

//! CSV record ingestion, JSON law documents and registries, fit reports, and
//! long-format frontier tables.
//!
//! All JSON documents carry `"schema": "compresslaw/v1"` and reject unknown
//! fields. Floats are written in shortest round-trip form, so every value
//! survives a write/read cycle bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lawcore::{
    check_data, check_feasibility, check_l0, check_ratio, check_runtime_feasibility, evaluate,
    CompressionLaw, FeasibilityReport, Law, MetricKind,
};
use crate::regress::{ExperimentRecord, FitForm, FitOutcome, FitStatistics};

pub const SCHEMA_VERSION: &str = "compresslaw/v1";

pub const RECORD_COLUMNS: [&str; 6] = ["model_id", "metric", "l0", "r", "d", "l"];

/// Coefficients of the published fits, tagged by table of origin.
pub const FIXTURE_REGISTRY_JSON: &str = include_str!("../fixtures/registry.json");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReadMode {
    /// Abort on the first invalid row.
    #[default]
    Strict,
    /// Skip invalid rows and report them.
    Lenient,
}

#[derive(Debug, Default)]
pub struct ReadOutcome {
    pub records: Vec<ExperimentRecord>,
    /// Rejected rows; always empty in strict mode.
    pub rejected: Vec<Error>,
}

/// Parse the `model_id,metric,l0,r,d,l` schema. Column order is free; extra
/// columns are ignored. Row numbers in errors are 1-based file lines.
pub fn read_records<R: Read>(reader: R, mode: ReadMode) -> Result<ReadOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 6];
    for (slot, name) in index.iter_mut().zip(RECORD_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut outcome = ReadOutcome::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, &index, line) {
            Ok(rec) => outcome.records.push(rec),
            Err(e) if mode == ReadMode::Lenient => outcome.rejected.push(e),
            Err(e) => return Err(e),
        }
    }
    if outcome.records.is_empty() && outcome.rejected.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(outcome)
}

fn parse_row(row: &csv::StringRecord, index: &[usize; 6], line: u64) -> Result<ExperimentRecord> {
    let field = |i: usize| row.get(index[i]).unwrap_or("");
    let row_err = |name: &str, message: String| Error::Row {
        row: line,
        field: Some(name.to_string()),
        message,
    };
    let number = |i: usize| -> Result<f64> {
        let name = RECORD_COLUMNS[i];
        let raw = field(i);
        raw.parse::<f64>()
            .map_err(|_| row_err(name, format!("field `{name}`: `{raw}` is not a number")))
    };

    let model_id = field(0).to_string();
    if model_id.is_empty() {
        return Err(row_err("model_id", "field `model_id` is empty".into()));
    }
    let metric: MetricKind = field(1)
        .parse()
        .map_err(|e: Error| row_err("metric", format!("field `metric`: {e}")))?;
    let rec = ExperimentRecord {
        model_id,
        metric,
        l0: number(2)?,
        r: number(3)?,
        d: number(4)?,
        l: number(5)?,
    };
    rec.validate().map_err(|e| match e {
        Error::Domain { field, .. } => row_err(field, format!("field `{field}`: {e}")),
        other => row_err("", other.to_string()),
    })?;
    Ok(rec)
}

pub fn write_records<W: Write>(writer: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RECORD_COLUMNS)?;
    for rec in records {
        wtr.write_record([
            rec.model_id.clone(),
            rec.metric.to_string(),
            fmt_f64(rec.l0),
            fmt_f64(rec.r),
            fmt_f64(rec.d),
            fmt_f64(rec.l),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// A single law wrapped in a versioned document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawDocument {
    pub schema: String,
    pub law: Law,
}

impl LawDocument {
    pub fn new(law: Law) -> Self {
        LawDocument {
            schema: SCHEMA_VERSION.to_string(),
            law,
        }
    }
}

fn check_schema(schema: &str) -> Result<()> {
    if schema == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "unsupported schema `{schema}` (expected `{SCHEMA_VERSION}`)"
        )))
    }
}

/// Read a law from either a law document or a fit report.
pub fn read_law(text: &str) -> Result<Law> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let is_report = value.get("stats").is_some() || value.get("residuals").is_some();
    let law = if is_report {
        serde_json::from_value::<FitReport>(value)?.checked()?.law
    } else {
        let doc: LawDocument = serde_json::from_value(value)?;
        check_schema(&doc.schema)?;
        doc.law
    };
    law.validate()?;
    Ok(law)
}

pub fn write_law(law: &Law) -> Result<String> {
    Ok(serde_json::to_string_pretty(&LawDocument::new(law.clone()))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub schema: String,
    pub form: FitForm,
    pub epsilon: f64,
    pub law: Law,
    pub stats: FitStatistics,
    pub warnings: Vec<String>,
    /// Log-space residuals in input order.
    pub residuals: Vec<f64>,
}

impl FitReport {
    fn checked(self) -> Result<Self> {
        check_schema(&self.schema)?;
        if self.residuals.len() != self.stats.n {
            return Err(Error::Schema(format!(
                "report has {} residuals for n = {}",
                self.residuals.len(),
                self.stats.n
            )));
        }
        Ok(self)
    }
}

impl From<FitOutcome> for FitReport {
    fn from(out: FitOutcome) -> Self {
        FitReport {
            schema: SCHEMA_VERSION.to_string(),
            form: out.form,
            epsilon: out.epsilon,
            law: out.law,
            stats: out.stats,
            warnings: out.warnings,
            residuals: out.residuals,
        }
    }
}

pub fn write_report(report: &FitReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn read_report(text: &str) -> Result<FitReport> {
    serde_json::from_str::<FitReport>(text)?.checked()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegistryKey {
    pub model_id: String,
    pub metric: MetricKind,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub model_id: String,
    pub metric: MetricKind,
    /// Compression method and any further qualifier, e.g. `calibration-free`.
    pub method: String,
    /// Where the coefficients come from, e.g. `table2`.
    pub source: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provenance: String,
    /// Parameter count of the base model, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_count: Option<f64>,
    /// Base-model performance, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    pub law: Law,
}

impl RegistryEntry {
    pub fn key(&self) -> RegistryKey {
        RegistryKey {
            model_id: self.model_id.clone(),
            metric: self.metric,
            method: self.method.clone(),
        }
    }

    pub fn feasibility(&self) -> FeasibilityReport {
        match &self.law {
            Law::Compression(l) => check_feasibility(l),
            Law::Runtime(l) => check_runtime_feasibility(l),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LawRegistry {
    entries: BTreeMap<RegistryKey, RegistryEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    schema: String,
    entries: Vec<RegistryEntry>,
}

impl LawRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The shipped registry of published coefficients.
    pub fn fixtures() -> Result<Self> {
        Self::from_json(FIXTURE_REGISTRY_JSON)
    }

    pub fn insert(&mut self, entry: RegistryEntry) -> Result<()> {
        entry.law.validate()?;
        if entry.law.metric() != entry.metric {
            return Err(Error::Schema(format!(
                "entry {}/{}/{} declares metric {} but its law is for {}",
                entry.model_id,
                entry.metric,
                entry.method,
                entry.metric,
                entry.law.metric()
            )));
        }
        let key = entry.key();
        if self.entries.contains_key(&key) {
            return Err(Error::Schema(format!(
                "duplicate registry key ({}, {}, {})",
                key.model_id, key.metric, key.method
            )));
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn get(&self, model_id: &str, metric: MetricKind, method: &str) -> Option<&RegistryEntry> {
        self.entries.get(&RegistryKey {
            model_id: model_id.to_string(),
            metric,
            method: method.to_string(),
        })
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RegistryDocument = serde_json::from_str(text)?;
        check_schema(&doc.schema)?;
        let mut registry = LawRegistry::new();
        for entry in doc.entries {
            registry.insert(entry)?;
        }
        Ok(registry)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = RegistryDocument {
            schema: SCHEMA_VERSION.to_string(),
            entries: self.entries.values().cloned().collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub l0: f64,
    pub r: f64,
    pub d: f64,
    pub predicted: f64,
}

/// Predictions over `l0 × r × d`, `l0` varying slowest.
pub fn emit_frontier_grid(
    law: &CompressionLaw,
    l0_list: &[f64],
    r_grid: &[f64],
    d_grid: &[f64],
) -> Result<Vec<FrontierRow>> {
    for (name, grid) in [("l0", l0_list), ("r", r_grid), ("d", d_grid)] {
        if grid.is_empty() {
            return Err(Error::InvalidParameter(format!("`{name}` grid is empty")));
        }
    }
    l0_list.iter().try_for_each(|&v| check_l0(v))?;
    r_grid.iter().try_for_each(|&v| check_ratio(v))?;
    d_grid.iter().try_for_each(|&v| check_data(v))?;

    let mut rows = Vec::with_capacity(l0_list.len() * r_grid.len() * d_grid.len());
    for &l0 in l0_list {
        for &r in r_grid {
            for &d in d_grid {
                rows.push(FrontierRow {
                    l0,
                    r,
                    d,
                    predicted: evaluate(law, l0, r, d)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_frontier_csv<W: Write>(writer: W, rows: &[FrontierRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["l0", "r", "d", "predicted"])?;
    for row in rows {
        wtr.write_record([fmt_f64(row.l0), fmt_f64(row.r), fmt_f64(row.d), fmt_f64(row.predicted)])?;
    }
    wtr.flush()?;
    Ok(())
}

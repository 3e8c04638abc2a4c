//! Comparison tables and their CSV / JSON renderings.
//!
//! Both formats carry the same columns: `rate_pkts_per_s`, `router`,
//! `mean_delay_s`, `mean_energy_j`, `delivery_ratio`, `n_seeds`. A missing
//! value is an empty CSV field or a JSON `null`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RouterKind, RunMetrics};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to report: the comparison table is empty")]
    Empty,
    #[error("unknown report format `{0}` (expected csv or json)")]
    UnknownFormat(String),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode report: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub rate_pkts_per_s: f64,
    pub router: RouterKind,
    pub mean_delay_s: Option<f64>,
    pub mean_energy_j: Option<f64>,
    pub delivery_ratio: Option<f64>,
    pub n_seeds: usize,
}

/// Aggregated rows plus the per-run metrics behind them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ReportRow>,
    pub runs: Vec<RunMetrics>,
}

impl ComparisonTable {
    pub fn row(&self, rate: f64, router: RouterKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.rate_pkts_per_s == rate && r.router == router)
    }

    pub fn runs_for(&self, rate: f64, router: RouterKind) -> impl Iterator<Item = &RunMetrics> {
        self.runs
            .iter()
            .filter(move |m| m.rate == rate && m.router == router)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

pub fn render_report(
    table: &ComparisonTable,
    format: ReportFormat,
) -> Result<Vec<u8>, ReportError> {
    if table.rows.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &table.rows {
                w.serialize(row)
                    .map_err(|e| ReportError::Encode(e.to_string()))?;
            }
            w.into_inner()
                .map_err(|e| ReportError::Encode(e.to_string()))
        }
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(&table.rows)
                .map_err(|e| ReportError::Encode(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

pub fn emit_report<W: Write>(
    table: &ComparisonTable,
    format: ReportFormat,
    mut out: W,
) -> Result<(), ReportError> {
    out.write_all(&render_report(table, format)?)?;
    out.flush()?;
    Ok(())
}

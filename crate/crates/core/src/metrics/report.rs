use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Detection and recognition scores for one model on one split. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MddReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per: f64,
    #[serde(rename = "cPER")]
    pub cper: Option<f64>,
    #[serde(rename = "iPER")]
    pub iper: Option<f64>,
    pub mean_delay_frames: Option<f64>,
    pub mean_delay_ms: Option<f64>,
}

/// One line of the results table: alignment statistics, error rates, detection scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub recipe: String,
    pub frames: f64,
    pub peaks: f64,
    pub delay_frames: Option<f64>,
    pub delay_ms: Option<f64>,
    pub per: f64,
    pub cper: Option<f64>,
    pub iper: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_json(path: &Path, rows: &[ReportRow]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(rows)?)?;
    Ok(())
}

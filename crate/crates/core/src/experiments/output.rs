//! CSV and JSON writers for run artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::credibility::CredibilityLedger;
use crate::error::{Error, Result};
use crate::ids::DeviceId;
use crate::sim::experiment::MetricsLog;
use crate::sim::roc::RocCurve;

pub const METRICS_HEADER: [&str; 6] = [
    "round",
    "server",
    "method",
    "accuracy",
    "untrusted_selected",
    "selected_ids",
];

pub fn write_metrics<W: Write>(out: W, log: &MetricsLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in &log.rows {
        let ids: Vec<String> = r.selected.iter().map(ToString::to_string).collect();
        w.write_record([
            r.round.to_string(),
            r.server.to_string(),
            r.method.to_string(),
            format!("{:.6}", r.accuracy),
            r.untrusted_selected.to_string(),
            ids.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_roc<W: Write>(out: W, roc: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "tpr", "fpr"])?;
    for p in &roc.points {
        w.write_record([
            format!("{}", p.threshold),
            format!("{:.6}", p.tpr),
            format!("{:.6}", p.fpr),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_file(path: &Path, log: &MetricsLog) -> Result<()> {
    write_metrics(create(path)?, log)
}

pub fn write_roc_file(path: &Path, roc: &RocCurve) -> Result<()> {
    write_roc(create(path)?, roc)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub type LedgerSnapshot = BTreeMap<DeviceId, CredibilityLedger<DeviceId>>;

pub fn read_ledgers(path: &Path) -> Result<LedgerSnapshot> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

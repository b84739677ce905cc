//! Header-row CSV inputs of the one-shot CLI commands.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ids::DeviceId;
use crate::matching::{build_device_preferences, build_server_preferences, PreferenceList};
use crate::recommender_tree::{HistoryDataset, InteractionRecord, TrustStatus};
use crate::resource_trust::{ReferenceSample, ResourceFeature, ResourceTrace};

fn table_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Table {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Deserializes every row, naming the 1-based data row on failure.
pub fn read_rows<T: DeserializeOwned, R: Read>(path: &Path, input: R) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| table_err(path, format!("row {}: {e}", i + 1))))
        .collect()
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr<Err = Error>>(path: &Path, row: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|e: Error| table_err(path, format!("row {row}: {e}")))
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    device_id: String,
    feature: String,
    value: f64,
}

/// `device_id,feature,value`, one observation per row, grouped by device
/// and feature in file order.
pub fn read_traces(path: &Path) -> Result<BTreeMap<DeviceId, Vec<ResourceTrace>>> {
    let rows: Vec<TraceRow> = read_rows(path, open(path)?)?;
    let mut grouped: BTreeMap<DeviceId, BTreeMap<ResourceFeature, Vec<f64>>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let device: DeviceId = parse(path, i + 1, &r.device_id)?;
        let feature: ResourceFeature = parse(path, i + 1, &r.feature)?;
        grouped.entry(device).or_default().entry(feature).or_default().push(r.value);
    }
    grouped
        .into_iter()
        .map(|(d, features)| {
            let traces = features
                .into_iter()
                .map(|(f, samples)| {
                    ResourceTrace::new(d, f, samples)
                        .map_err(|e| table_err(path, format!("device {d}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((d, traces))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct ReferenceRow {
    feature: String,
    value: f64,
}

/// `feature,value`.
pub fn read_reference(path: &Path) -> Result<Vec<ReferenceSample>> {
    let rows: Vec<ReferenceRow> = read_rows(path, open(path)?)?;
    let mut grouped: BTreeMap<ResourceFeature, Vec<f64>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let f: ResourceFeature = parse(path, i + 1, &r.feature)?;
        grouped.entry(f).or_default().push(r.value);
    }
    Ok(grouped
        .into_iter()
        .map(|(f, v)| ReferenceSample::new(f, v))
        .collect())
}

#[derive(Debug, Deserialize)]
struct DevicePrefRow {
    device_id: String,
    server_id: String,
    trust: f64,
}

#[derive(Debug, Deserialize)]
struct ServerPrefRow {
    server_id: String,
    quota: usize,
    device_id: String,
    trust: f64,
}

pub type StringPrefs = (
    Vec<PreferenceList<String, String>>,
    Vec<PreferenceList<String, String>>,
    BTreeMap<String, usize>,
);

/// Devices: `device_id,server_id,trust` (the device's trust in the
/// server). Servers: `server_id,quota,device_id,trust` (the server's trust
/// in the device). Rows become preference lists ordered by trust.
pub fn read_preferences(devices: &Path, servers: &Path) -> Result<StringPrefs> {
    let drows: Vec<DevicePrefRow> = read_rows(devices, open(devices)?)?;
    let srows: Vec<ServerPrefRow> = read_rows(servers, open(servers)?)?;

    let mut dmap: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (i, r) in drows.into_iter().enumerate() {
        let entry = dmap.entry(r.device_id.clone()).or_default();
        if entry.insert(r.server_id.clone(), r.trust).is_some() {
            return Err(table_err(
                devices,
                format!("row {}: {} rates {} twice", i + 1, r.device_id, r.server_id),
            ));
        }
    }
    let mut smap: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut quotas: BTreeMap<String, usize> = BTreeMap::new();
    for (i, r) in srows.into_iter().enumerate() {
        if let Some(&q) = quotas.get(&r.server_id) {
            if q != r.quota {
                return Err(table_err(
                    servers,
                    format!("row {}: conflicting quotas for {}", i + 1, r.server_id),
                ));
            }
        }
        quotas.insert(r.server_id.clone(), r.quota);
        let entry = smap.entry(r.server_id.clone()).or_default();
        if entry.insert(r.device_id.clone(), r.trust).is_some() {
            return Err(table_err(
                servers,
                format!("row {}: {} rates {} twice", i + 1, r.server_id, r.device_id),
            ));
        }
    }
    let dprefs = dmap
        .into_iter()
        .map(|(d, t)| build_device_preferences(d, &t))
        .collect();
    let sprefs = smap
        .into_iter()
        .map(|(s, t)| build_server_preferences(s, &t))
        .collect();
    Ok((dprefs, sprefs, quotas))
}

#[derive(Debug, Deserialize)]
struct HistoryRow {
    #[serde(default)]
    recommender_id: Option<String>,
    server_id: String,
    location: String,
    #[serde(default)]
    payment: Option<String>,
    #[serde(default)]
    trust_score: Option<f64>,
    #[serde(default)]
    trust_status: Option<String>,
}

fn record(path: &Path, row: usize, r: HistoryRow, label_required: bool) -> Result<InteractionRecord> {
    let trust_status = match r.trust_status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(parse::<TrustStatus>(path, row, s)?),
        None if label_required => {
            return Err(table_err(path, format!("row {row}: missing trust_status")))
        }
        None => None,
    };
    Ok(InteractionRecord {
        server_id: r.server_id,
        location: r.location,
        payment: r.payment.filter(|p| !p.is_empty()),
        trust_score: r.trust_score,
        trust_status,
    })
}

/// `[recommender_id,]server_id,location[,payment][,trust_score],trust_status`.
/// Without a `recommender_id` column every row belongs to one recommender
/// named `r0`.
pub fn read_histories(path: &Path) -> Result<BTreeMap<String, HistoryDataset>> {
    let rows: Vec<HistoryRow> = read_rows(path, open(path)?)?;
    let mut grouped: BTreeMap<String, Vec<InteractionRecord>> = BTreeMap::new();
    for (i, r) in rows.into_iter().enumerate() {
        let who = r.recommender_id.clone().unwrap_or_else(|| "r0".into());
        grouped.entry(who).or_default().push(record(path, i + 1, r, true)?);
    }
    if grouped.is_empty() {
        return Err(table_err(path, "no history rows"));
    }
    grouped
        .into_iter()
        .map(|(who, recs)| Ok((who, HistoryDataset::with_default_attributes(recs)?)))
        .collect()
}

/// `server_id,location[,payment],trust_status` with ground-truth labels.
pub fn read_queries(path: &Path) -> Result<Vec<InteractionRecord>> {
    let rows: Vec<HistoryRow> = read_rows(path, open(path)?)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| record(path, i + 1, r, true))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn traces_grouped_by_device_and_feature() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "t.csv",
            "device_id,feature,value\nd1,cpu,3\nd1,cpu,4\nd2,ram,5\nd1,ram,1\n",
        );
        let t = read_traces(&p).unwrap();
        assert_eq!(t[&DeviceId(1)].len(), 2);
        let cpu = t[&DeviceId(1)].iter().find(|x| x.feature == ResourceFeature::Cpu).unwrap();
        assert_eq!(cpu.samples, vec![3.0, 4.0]);
    }

    #[test]
    fn bad_row_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "device_id,feature,value\nd1,cpu,3\nd1,gpu,4\n");
        let err = read_traces(&p).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn preferences_ordered_by_trust() {
        let dir = tempfile::tempdir().unwrap();
        let d = write(dir.path(), "d.csv", "device_id,server_id,trust\na,x,0.2\na,y,0.9\n");
        let s = write(dir.path(), "s.csv", "server_id,quota,device_id,trust\nx,1,a,0.5\ny,2,a,0.7\n");
        let (dp, sp, q) = read_preferences(&d, &s).unwrap();
        assert_eq!(dp[0].ranked, vec!["y".to_string(), "x".to_string()]);
        assert_eq!(sp.len(), 2);
        assert_eq!(q["y"], 2);
    }

    #[test]
    fn histories_without_recommender_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "h.csv",
            "server_id,location,trust_score,trust_status\nS1,Asia,99.0,YES\nS3,America,90,NO\n",
        );
        let h = read_histories(&p).unwrap();
        assert_eq!(h["r0"].len(), 2);
    }
}

//! Prediction batches: one CSV row per forecast day plus a JSON sidecar.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use ttf_core::eval::PredictionRecord;
use ttf_core::ltv::{ChannelId, Day, LtvDataset};

use crate::error::{OpsError, Result};
use crate::hub::{content_id, read_json, write_atomic, write_json, Hub};

pub const BATCH_HEADER: &str =
    "channel_id,activation_date,retention_day,predicted_ltv,model_version,dataset_version,code_version";

pub fn code_version() -> String {
    format!("ttf-{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub channel_id: ChannelId,
    pub activation_date: Day,
    pub retention_day: usize,
    pub predicted_ltv: f64,
    pub model_version: String,
    pub dataset_version: String,
    pub code_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionBatch {
    pub batch_id: String,
    pub model_version: String,
    pub dataset_version: String,
    pub code_version: String,
    pub created_at: String,
    pub as_of: Day,
    pub m: usize,
    pub n: usize,
    pub cohorts: usize,
    pub rows: usize,
    pub file: PathBuf,
}

/// Renders records as batch rows. Forecast day `h` of a record is
/// retention day `m + h`.
pub fn render(records: &[PredictionRecord], m: usize, model: &str, dataset: &str) -> Vec<u8> {
    let code = code_version();
    let mut out = String::from(BATCH_HEADER);
    out.push('\n');
    for r in records {
        for (h, p) in r.predicted.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.channel,
                r.activation,
                m + h,
                p,
                model,
                dataset,
                code
            ));
        }
    }
    out.into_bytes()
}

pub fn parse(bytes: &[u8]) -> Result<Vec<BatchRow>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| OpsError::Usage(format!("bad batch file: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != BATCH_HEADER {
        return Err(OpsError::Usage(format!("bad batch header `{}`", header.join(","))));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| OpsError::Usage(format!("bad batch row: {e}"))))
        .collect()
}

/// Writes the CSV and sidecar under `predictions/`. The id is a hash of the
/// CSV bytes, so re-running an identical prediction reuses the batch.
pub fn store(hub: &Hub, csv: &[u8], mut meta: PredictionBatch) -> Result<PredictionBatch> {
    let id = content_id(&[csv]);
    let file = PathBuf::from("predictions").join(format!("{id}.csv"));
    let sidecar = hub.path("predictions").join(format!("{id}.json"));
    if sidecar.exists() {
        return read_json(&sidecar);
    }
    write_atomic(&hub.path(&file), csv)?;
    meta.batch_id = id;
    meta.file = file;
    write_json(&sidecar, &meta)?;
    Ok(meta)
}

pub fn load(hub: &Hub, id: &str) -> Result<(PredictionBatch, Vec<BatchRow>)> {
    let sidecar = hub.path("predictions").join(format!("{id}.json"));
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_hexdigit()) || !sidecar.exists() {
        return Err(OpsError::UnknownVersion(id.to_string()));
    }
    let meta: PredictionBatch = read_json(&sidecar)?;
    let path = hub.path(&meta.file);
    let bytes = std::fs::read(&path).map_err(|e| OpsError::io(&path, e))?;
    Ok((meta, parse(&bytes)?))
}

/// Joins batch rows with realized curves. Cohorts whose horizon has not
/// fully matured in `data` are left out and counted.
pub fn join_actuals(
    rows: &[BatchRow],
    meta: &PredictionBatch,
    data: &LtvDataset,
) -> Result<(Vec<PredictionRecord>, usize)> {
    let mut grouped: BTreeMap<(ChannelId, Day), Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        grouped
            .entry((r.channel_id.clone(), r.activation_date))
            .or_default()
            .push((r.retention_day, r.predicted_ltv));
    }
    let (m, n) = (meta.m, meta.n);
    let mut records = Vec::new();
    let mut unmatured = 0;
    for ((channel, activation), mut points) in grouped {
        points.sort_by_key(|p| p.0);
        let days: Vec<usize> = points.iter().map(|p| p.0).collect();
        if days != (m..m + n).collect::<Vec<_>>() {
            return Err(OpsError::Usage(format!(
                "batch rows for {channel} {activation} do not cover retention days {m}..{}",
                m + n
            )));
        }
        let Some(curve) = data.curve(&channel, activation) else {
            unmatured += 1;
            continue;
        };
        if curve.len() < m + n {
            unmatured += 1;
            continue;
        }
        records.push(PredictionRecord {
            channel,
            activation,
            predicted: points.iter().map(|p| p.1).collect(),
            actual: curve.slice(m, m + n)?.to_vec(),
            user_count: curve.user_count(),
            observed_prefix: curve.slice(0, m)?.to_vec(),
        });
    }
    Ok((records, unmatured))
}

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{mape_counted, record_mape_a, PredictionRecord};
use crate::error::{Error, Result};
use crate::ltv::{ChannelId, HolidayCalendar};
use crate::model::MtFusionNet;
use crate::trapezoid::TrapezoidWindow;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub channel: ChannelId,
    pub records: usize,
    pub user_weight: u64,
    pub mape_p: f64,
    pub mape_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mape_p: f64,
    pub mape_a: f64,
    pub records: usize,
    /// Forecast entries skipped for near-zero actuals.
    pub excluded_entries: usize,
    pub n_total: usize,
    pub per_channel: Vec<ChannelMetrics>,
    pub fingerprint: String,
}

impl EvalReport {
    /// Scores `records`; `mape_a` covers retention days `0..n_total`.
    pub fn from_records(records: &[PredictionRecord], n_total: usize, fingerprint: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("no prediction records".into()));
        }
        #[derive(Default)]
        struct Acc {
            records: usize,
            weight: u64,
            p: f64,
            a: f64,
        }
        let mut by_channel: BTreeMap<ChannelId, Acc> = BTreeMap::new();
        let mut excluded = 0;
        for r in records {
            r.validate()?;
            let (p, skipped) = mape_counted(&r.predicted, &r.actual)?;
            let a = record_mape_a(r, n_total)?;
            excluded += skipped;
            let w = r.user_count as f64;
            let acc = by_channel.entry(r.channel.clone()).or_default();
            acc.records += 1;
            acc.weight += r.user_count;
            acc.p += w * p;
            acc.a += w * a;
        }
        let per_channel: Vec<ChannelMetrics> = by_channel
            .into_iter()
            .map(|(channel, acc)| ChannelMetrics {
                channel,
                records: acc.records,
                user_weight: acc.weight,
                mape_p: acc.p / acc.weight as f64,
                mape_a: acc.a / acc.weight as f64,
            })
            .collect();
        let (mape_p, mape_a) = recompose(&per_channel);
        Ok(EvalReport {
            mape_p,
            mape_a,
            records: records.len(),
            excluded_entries: excluded,
            n_total,
            per_channel,
            fingerprint: fingerprint.into(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// One row per channel followed by an `ALL` row.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "channel_id,records,user_weight,mape_p,mape_a")?;
        for c in &self.per_channel {
            writeln!(w, "{},{},{},{},{}", c.channel, c.records, c.user_weight, c.mape_p, c.mape_a)?;
        }
        let weight: u64 = self.per_channel.iter().map(|c| c.user_weight).sum();
        writeln!(w, "ALL,{},{},{},{}", self.records, weight, self.mape_p, self.mape_a)
    }
}

/// User-weight combination of per-channel metrics.
pub fn recompose(per_channel: &[ChannelMetrics]) -> (f64, f64) {
    let total: f64 = per_channel.iter().map(|c| c.user_weight as f64).sum();
    let p = per_channel.iter().map(|c| c.user_weight as f64 * c.mape_p).sum::<f64>() / total;
    let a = per_channel.iter().map(|c| c.user_weight as f64 * c.mape_a).sum::<f64>() / total;
    (p, a)
}

/// Forecast of the newest cohort in each window, paired with its actuals
/// when the window carries a target.
pub fn predict_records(
    model: &MtFusionNet,
    windows: &[TrapezoidWindow],
    calendar: &HolidayCalendar,
) -> Result<Vec<PredictionRecord>> {
    let spec = model.config().spec;
    windows
        .iter()
        .map(|w| {
            let cov = model.config().covariates.build(w, calendar);
            let out = model.forward(w, &cov, None)?;
            let k = spec.k;
            let (input, target) = w.last_column();
            Ok(PredictionRecord {
                channel: w.channel.clone(),
                activation: w.last_activation(),
                predicted: out.column(k - 1).to_vec(),
                actual: target.map(|t| t.to_vec()).unwrap_or_default(),
                user_count: w.user_counts[k - 1],
                observed_prefix: input.iter().skip(input.len() - spec.m).copied().collect(),
            })
        })
        .collect()
}

/// `retention_day,actual,predicted` rows for plotting one record.
pub fn write_plot_data(record: &PredictionRecord, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "retention_day,actual,predicted")?;
    for (i, v) in record.observed_prefix.iter().enumerate() {
        writeln!(w, "{i},{v},")?;
    }
    let m = record.observed_prefix.len();
    for (h, p) in record.predicted.iter().enumerate() {
        match record.actual.get(h) {
            Some(a) => writeln!(w, "{},{a},{p}", m + h)?,
            None => writeln!(w, "{},,{p}", m + h)?,
        }
    }
    Ok(())
}

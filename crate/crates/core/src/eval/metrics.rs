use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltv::{ActivationDate, ChannelId};

/// Actual values below this magnitude are excluded from pointwise MAPE.
pub const EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub channel: ChannelId,
    pub activation: ActivationDate,
    /// Retention days `m..m+n`.
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
    pub user_count: u64,
    /// Retention days `0..m`, known at prediction time.
    pub observed_prefix: Vec<f64>,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.predicted.len() != self.actual.len() || self.predicted.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "record {} {}: {} predicted vs {} actual values",
                self.channel,
                self.activation,
                self.predicted.len(),
                self.actual.len()
            )));
        }
        if self.user_count == 0 {
            return Err(Error::InvalidValue(format!(
                "record {} {} has zero users",
                self.channel, self.activation
            )));
        }
        Ok(())
    }
}

/// Pointwise MAPE with the number of excluded near-zero actuals.
pub fn mape_counted(pred: &[f64], actual: &[f64]) -> Result<(f64, usize)> {
    if pred.len() != actual.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no values to score".into()));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, a) in pred.iter().zip(actual) {
        if a.abs() < EPSILON {
            continue;
        }
        sum += (p - a).abs() / a.abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllEntriesDegenerate);
    }
    Ok((sum / used as f64, pred.len() - used))
}

pub fn mape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    mape_counted(pred, actual).map(|(v, _)| v)
}

fn weighted(records: &[PredictionRecord], per_record: impl Fn(&PredictionRecord) -> Result<f64>) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for r in records {
        r.validate()?;
        let w = r.user_count as f64;
        num += w * per_record(r)?;
        den += w;
    }
    Ok(num / den)
}

/// User-count-weighted mean of per-record pointwise MAPE.
pub fn mape_p(records: &[PredictionRecord]) -> Result<f64> {
    weighted(records, |r| mape(&r.predicted, &r.actual))
}

/// Relative error of cumulative LTV over retention days `0..n_total`,
/// composed from the observed prefix and the first `n_total − m` forecast
/// days, weighted by user count.
pub fn mape_a(records: &[PredictionRecord], n_total: usize) -> Result<f64> {
    weighted(records, |r| record_mape_a(r, n_total))
}

pub fn record_mape_a(r: &PredictionRecord, n_total: usize) -> Result<f64> {
    let m = r.observed_prefix.len();
    if n_total <= m || n_total > m + r.predicted.len() {
        return Err(Error::OutOfRange(format!(
            "n_total {n_total} outside ({m}, {}]",
            m + r.predicted.len()
        )));
    }
    let h = n_total - m;
    let prefix: f64 = r.observed_prefix.iter().sum();
    let pred = prefix + r.predicted[..h].iter().sum::<f64>();
    let actual = prefix + r.actual[..h].iter().sum::<f64>();
    if actual.abs() <= EPSILON {
        return Err(Error::DegenerateActual(actual));
    }
    Ok((pred - actual).abs() / actual.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltv::Day;

    fn rec(pred: Vec<f64>, actual: Vec<f64>, users: u64, prefix: Vec<f64>) -> PredictionRecord {
        PredictionRecord {
            channel: ChannelId::new("c").unwrap(),
            activation: Day::from_offset(0),
            predicted: pred,
            actual,
            user_count: users,
            observed_prefix: prefix,
        }
    }

    #[test]
    fn pointwise() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[2.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(mape(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 0.5);
        assert_eq!(mape_counted(&[1.0, 5.0], &[0.0, 4.0]).unwrap(), (0.25, 1));
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::AllEntriesDegenerate)));
        assert!(matches!(mape(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn weighted_examples() {
        let a = rec(vec![1.1], vec![1.0], 1, vec![1.0]);
        let b = rec(vec![1.3], vec![1.0], 3, vec![1.0]);
        let v = mape_p(&[a.clone(), b]).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
        assert!((mape_p(&[a.clone()]).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(mape_p(&[]), Err(Error::EmptyInput(_))));

        let r = rec(vec![10.0, 10.0], vec![15.0, 15.0], 2, vec![4.0, 6.0]);
        assert!((mape_a(&[r.clone()], 4).unwrap() - 0.25).abs() < 1e-12);
        assert!(matches!(mape_a(&[r.clone()], 5), Err(Error::OutOfRange(_))));
        let z = rec(vec![1.0], vec![0.0], 1, vec![0.0]);
        assert!(matches!(mape_a(&[z], 2), Err(Error::DegenerateActual(_))));
    }
}

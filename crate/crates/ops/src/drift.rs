//! Rolling-window MAPE_p drift detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use ttf_core::ltv::Day;

use crate::error::{OpsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Ok,
    RetrainTrigger,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub day: Day,
    pub mape_p: f64,
    pub window_mean: Option<f64>,
    pub baseline: f64,
    pub decision: Decision,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftState {
    pub window: VecDeque<(Day, f64)>,
    pub baseline: Option<f64>,
    pub window_days: usize,
    /// Absolute MAPE_p increase that triggers a retrain.
    pub threshold: f64,
    pub alerts: Vec<DriftCheck>,
}

impl DriftState {
    pub fn new(window_days: usize, threshold: f64) -> Self {
        DriftState {
            window: VecDeque::new(),
            baseline: None,
            window_days,
            threshold,
            alerts: Vec::new(),
        }
    }

    /// Starts a fresh window against a new baseline.
    pub fn rebase(&mut self, baseline: f64) {
        self.baseline = Some(baseline);
        self.window.clear();
    }

    /// Adds a daily point and decides. Fires when the mean over a full
    /// window exceeds the baseline by more than the threshold.
    pub fn check(&mut self, day: Day, mape_p: f64) -> Result<DriftCheck> {
        let baseline = self.baseline.ok_or(OpsError::NoBaseline)?;
        self.window.push_back((day, mape_p));
        while self.window.len() > self.window_days {
            self.window.pop_front();
        }
        let check = if self.window.len() < self.window_days {
            DriftCheck {
                day,
                mape_p,
                window_mean: None,
                baseline,
                decision: Decision::Ok,
                note: Some(format!(
                    "insufficient window: {} of {} days",
                    self.window.len(),
                    self.window_days
                )),
            }
        } else {
            let mean = self.window.iter().map(|(_, v)| v).sum::<f64>() / self.window.len() as f64;
            let decision = if mean - baseline > self.threshold {
                Decision::RetrainTrigger
            } else {
                Decision::Ok
            };
            DriftCheck {
                day,
                mape_p,
                window_mean: Some(mean),
                baseline,
                decision,
                note: None,
            }
        };
        self.alerts.push(check.clone());
        Ok(check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(baseline: f64, value: f64, days: usize) -> DriftCheck {
        let mut s = DriftState::new(7, 0.02);
        s.rebase(baseline);
        let mut last = None;
        for d in 0..days {
            last = Some(s.check(Day::from_offset(d as i32), value).unwrap());
        }
        last.unwrap()
    }

    #[test]
    fn pinned_examples() {
        assert_eq!(run(0.135, 0.139, 7).decision, Decision::Ok);
        assert_eq!(run(0.135, 0.158, 7).decision, Decision::RetrainTrigger);
        let short = run(0.135, 0.5, 6);
        assert_eq!(short.decision, Decision::Ok);
        assert!(short.note.unwrap().contains("insufficient"));
        let mut s = DriftState::new(7, 0.02);
        assert!(matches!(s.check(Day::from_offset(0), 0.1), Err(OpsError::NoBaseline)));
    }

    #[test]
    fn window_is_bounded() {
        let mut s = DriftState::new(7, 0.02);
        s.rebase(0.1);
        for d in 0..30 {
            s.check(Day::from_offset(d), 0.1).unwrap();
            assert!(s.window.len() <= 7);
        }
        assert_eq!(s.alerts.len(), 30);
    }
}

//! Per-channel temporal holdouts keyed on forecast origins.
//!
//! A window's forecast origin is the first calendar date of its target rows.
//! For a cut date `c`, windows with origin `≥ c` are held out and windows
//! whose target ends before `c` are fit on. Windows in between would leak
//! held-out dates into fitting and belong to neither side.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ltv::{ChannelId, Day, LtvDataset};
use crate::trapezoid::TrapezoidWindow;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Fit,
    Holdout,
    Gap,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalSplit {
    cutoffs: BTreeMap<ChannelId, Option<Day>>,
    horizon: usize,
}

/// `None` when the fraction rounds to no held-out days.
fn cut(lo: Day, hi: Day, fraction: f64) -> Option<Day> {
    let span = hi.days_since(lo) + 1;
    let held = (fraction * span as f64).round() as i64;
    (held > 0).then(|| hi.plus(1 - held))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if (0.0..1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("holdout fraction {fraction} outside [0, 1)")))
    }
}

impl TemporalSplit {
    /// Holds out the last `fraction` of each channel's feasible origins: from
    /// the first activation plus `m` to the last observed day minus `n − 1`.
    /// Depends only on the data and `(m, n)`, so window sets built with
    /// different `k` share the same held-out cohorts.
    pub fn from_dataset(dataset: &LtvDataset, m: usize, n: usize, fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        let mut cutoffs = BTreeMap::new();
        for ch in dataset.channels() {
            let curves: Vec<_> = dataset.channel_curves(&ch).collect();
            let first = curves.iter().map(|c| c.activation()).min();
            let last = curves.iter().filter_map(|c| c.last_observed()).max();
            if let (Some(first), Some(last)) = (first, last) {
                let lo = first.plus(m as i64);
                let hi = last.plus(1 - n as i64);
                if hi >= lo {
                    cutoffs.insert(ch, cut(lo, hi, fraction));
                }
            }
        }
        Ok(TemporalSplit { cutoffs, horizon: n })
    }

    /// Holds out the last `fraction` of the origin span present in `windows`,
    /// per channel.
    pub fn from_windows(windows: &[TrapezoidWindow], fraction: f64) -> Result<Self> {
        check_fraction(fraction)?;
        let mut spans: BTreeMap<ChannelId, (Day, Day)> = BTreeMap::new();
        for w in windows {
            let o = w.forecast_origin();
            spans
                .entry(w.channel.clone())
                .and_modify(|(lo, hi)| {
                    *lo = (*lo).min(o);
                    *hi = (*hi).max(o);
                })
                .or_insert((o, o));
        }
        let cutoffs = spans
            .into_iter()
            .map(|(ch, (lo, hi))| (ch, cut(lo, hi, fraction)))
            .collect();
        let horizon = windows.first().map_or(1, |w| w.spec.n);
        Ok(TemporalSplit { cutoffs, horizon })
    }

    pub fn cutoff(&self, channel: &ChannelId) -> Option<Day> {
        self.cutoffs.get(channel).copied().flatten()
    }

    pub fn classify(&self, channel: &ChannelId, origin: Day) -> Part {
        match self.cutoffs.get(channel) {
            None => Part::Gap,
            Some(None) => Part::Fit,
            Some(&Some(c)) if origin >= c => Part::Holdout,
            Some(&Some(c)) if origin.plus(self.horizon as i64 - 1) < c => Part::Fit,
            Some(_) => Part::Gap,
        }
    }

    pub fn part(&self, window: &TrapezoidWindow) -> Part {
        self.classify(&window.channel, window.forecast_origin())
    }

    /// `(fit, holdout)` indices into `windows`, in input order.
    pub fn partition(&self, windows: &[TrapezoidWindow]) -> (Vec<usize>, Vec<usize>) {
        let mut fit = Vec::new();
        let mut holdout = Vec::new();
        for (i, w) in windows.iter().enumerate() {
            match self.part(w) {
                Part::Fit => fit.push(i),
                Part::Holdout => holdout.push(i),
                Part::Gap => {}
            }
        }
        (fit, holdout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltv::LtvCurve;
    use crate::trapezoid::{enumerate_windows, WindowSpec};

    fn dataset(days: i32) -> LtvDataset {
        let ch = ChannelId::new("c").unwrap();
        LtvDataset::from_curves((0..days).map(|t| {
            let len = (days - t) as usize;
            LtvCurve::new(ch.clone(), Day::from_offset(t), vec![1.0; len], 5).unwrap()
        }))
        .unwrap()
    }

    #[test]
    fn holdout_and_gap() {
        let ds = dataset(40);
        let spec = WindowSpec::new(2, 3, 4, 1).unwrap();
        let windows = enumerate_windows(&ds, spec, true).windows;
        let split = TemporalSplit::from_dataset(&ds, 2, 3, 0.25).unwrap();
        let (fit, hold) = split.partition(&windows);
        assert!(!fit.is_empty() && !hold.is_empty());
        let c = split.cutoff(&ChannelId::new("c").unwrap()).unwrap();
        for &i in &fit {
            assert!(windows[i].forecast_origin().plus(2) < c);
        }
        for &i in &hold {
            assert!(windows[i].forecast_origin() >= c);
        }
        // Origins run from day 2 to day 37: 36 days, 9 held out.
        assert_eq!(c, Day::from_offset(29));
        assert_eq!(fit.len() + hold.len() + 2, windows.len());
    }

    #[test]
    fn k_independent_cutoffs() {
        let ds = dataset(50);
        let a = TemporalSplit::from_dataset(&ds, 3, 5, 0.2).unwrap();
        let w1 = enumerate_windows(&ds, WindowSpec::new(3, 5, 1, 1).unwrap(), true).windows;
        let w6 = enumerate_windows(&ds, WindowSpec::new(3, 5, 6, 1).unwrap(), true).windows;
        let last = |ws: &[TrapezoidWindow], idx: Vec<usize>| -> Vec<Day> {
            idx.into_iter().map(|i| ws[i].last_activation()).collect()
        };
        assert_eq!(last(&w1, a.partition(&w1).1), last(&w6, a.partition(&w6).1));
        assert!(TemporalSplit::from_dataset(&ds, 3, 5, 1.0).is_err());
    }

    #[test]
    fn zero_fraction_holds_nothing_out() {
        let ds = dataset(20);
        let ws = enumerate_windows(&ds, WindowSpec::new(2, 2, 2, 1).unwrap(), true).windows;
        let split = TemporalSplit::from_windows(&ws, 0.0).unwrap();
        let (fit, hold) = split.partition(&ws);
        assert_eq!(fit.len(), ws.len());
        assert!(hold.is_empty());
    }
}

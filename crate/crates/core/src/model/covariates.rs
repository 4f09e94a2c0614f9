//! Static (channel one-hot) and dynamic (calendar + holiday) covariates.

use std::f64::consts::TAU;

use chrono::Datelike;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltv::{ChannelId, Day, HolidayCalendar};
use crate::trapezoid::{TrapezoidWindow, WindowSpec};

/// Day-of-week, day-of-month, month-of-year and day-of-year as sin/cos
/// pairs, then a holiday flag.
pub const TIME_FEATURES: usize = 9;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateConfig {
    /// One-hot vocabulary for the static channel covariate; empty disables it.
    #[serde(default)]
    pub channels: Vec<ChannelId>,
    /// Enables the calendar/holiday dynamic covariates.
    #[serde(default)]
    pub time_features: bool,
}

impl CovariateConfig {
    pub fn none() -> Self {
        CovariateConfig::default()
    }

    pub fn full(channels: Vec<ChannelId>) -> Self {
        CovariateConfig {
            channels,
            time_features: true,
        }
    }

    /// `(C_sta, C_dyn)`.
    pub fn widths(&self) -> (usize, usize) {
        (
            self.channels.len(),
            if self.time_features { TIME_FEATURES } else { 0 },
        )
    }

    /// Builds the bundle for a window. Channels outside the vocabulary get
    /// an all-zero static vector.
    pub fn build(&self, window: &TrapezoidWindow, calendar: &HolidayCalendar) -> CovariateBundle {
        self.build_for(&window.channel, window.start_day, window.spec, calendar)
    }

    pub fn build_for(
        &self,
        channel: &ChannelId,
        start_day: Day,
        spec: WindowSpec,
        calendar: &HolidayCalendar,
    ) -> CovariateBundle {
        let (c_sta, c_dyn) = self.widths();
        let mut static_cov = Array2::zeros((c_sta, 1));
        if let Some(i) = self.channels.iter().position(|c| c == channel) {
            static_cov[[i, 0]] = 1.0;
        }
        let l = spec.input_len();
        let mut dyn_past = Array2::zeros((l, c_dyn));
        let mut dyn_future = Array2::zeros((spec.n, c_dyn));
        if c_dyn > 0 {
            for p in 0..l {
                let f = time_features(start_day.plus(p as i64), calendar);
                dyn_past.row_mut(p).assign(&ndarray::aview1(&f));
            }
            let origin = spec.forecast_origin(start_day);
            for h in 0..spec.n {
                let f = time_features(origin.plus(h as i64), calendar);
                dyn_future.row_mut(h).assign(&ndarray::aview1(&f));
            }
        }
        CovariateBundle {
            static_cov,
            dyn_past,
            dyn_future,
        }
    }
}

pub fn time_features(day: Day, calendar: &HolidayCalendar) -> [f64; TIME_FEATURES] {
    let date = day.to_naive();
    let phases = [
        day.weekday() as f64 / 7.0,
        (date.day() - 1) as f64 / 31.0,
        date.month0() as f64 / 12.0,
        date.ordinal0() as f64 / 366.0,
    ];
    let mut out = [0.0; TIME_FEATURES];
    for (i, phase) in phases.iter().enumerate() {
        out[2 * i] = (TAU * phase).sin();
        out[2 * i + 1] = (TAU * phase).cos();
    }
    out[8] = if calendar.contains(day) { 1.0 } else { 0.0 };
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateBundle {
    /// `C_sta × 1`.
    pub static_cov: Array2<f64>,
    /// `l × C_dyn`, dates of the input rows.
    pub dyn_past: Array2<f64>,
    /// `n × C_dyn`, dates of the forecast rows.
    pub dyn_future: Array2<f64>,
}

impl CovariateBundle {
    pub fn empty(l: usize, n: usize) -> Self {
        CovariateBundle {
            static_cov: Array2::zeros((0, 1)),
            dyn_past: Array2::zeros((l, 0)),
            dyn_future: Array2::zeros((n, 0)),
        }
    }

    pub fn check(&self, l: usize, n: usize, c_sta: usize, c_dyn: usize) -> Result<()> {
        let ok = self.static_cov.dim() == (c_sta, 1)
            && self.dyn_past.dim() == (l, c_dyn)
            && self.dyn_future.dim() == (n, c_dyn);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "covariates static {:?}, past {:?}, future {:?}; expected ({c_sta}, 1), ({l}, {c_dyn}), ({n}, {c_dyn})",
                self.static_cov.dim(),
                self.dyn_past.dim(),
                self.dyn_future.dim()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_and_shapes() {
        let a = ChannelId::new("a").unwrap();
        let b = ChannelId::new("b").unwrap();
        let cfg = CovariateConfig::full(vec![a.clone(), b.clone()]);
        let spec = WindowSpec::new(3, 4, 2, 1).unwrap();
        let start = Day::from_ymd(2024, 1, 1).unwrap();
        let cal = HolidayCalendar::new([start.plus(1), start.plus(5)]);
        let bundle = cfg.build_for(&b, start, spec, &cal);
        bundle.check(4, 4, 2, TIME_FEATURES).unwrap();
        assert_eq!(bundle.static_cov.column(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(bundle.dyn_past.column(8).to_vec(), vec![0.0, 1.0, 0.0, 0.0]);
        // Forecast rows start on day 4; day 5 is the holiday.
        assert_eq!(bundle.dyn_future.column(8).to_vec(), vec![0.0, 1.0, 0.0, 0.0]);
        let unknown = cfg.build_for(&ChannelId::new("z").unwrap(), start, spec, &cal);
        assert_eq!(unknown.static_cov.sum(), 0.0);
        assert!(CovariateBundle::empty(4, 4).check(4, 4, 2, 9).is_err());
    }

    #[test]
    fn features_are_bounded_pairs() {
        let cal = HolidayCalendar::default();
        for d in 0..800 {
            let f = time_features(Day::from_offset(19_000 + d), &cal);
            for i in 0..4 {
                let r = f[2 * i].powi(2) + f[2 * i + 1].powi(2);
                assert!((r - 1.0).abs() < 1e-12);
            }
        }
    }
}

//! Trapezoidal multi-series windows.
//!
//! A window stacks `k` curves of one channel whose activation dates are `s`
//! days apart. Columns are aligned by calendar date: column `j` starts with
//! `s·j` structural zeros followed by retention days `0..` of the curve
//! activated on `start_day + s·j`, so every column ends on the same date
//! `start_day + l − 1` and the newest (last) column holds exactly `m`
//! observed values.

use std::io::Write;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltv::{ChannelId, Day, LtvDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Observed length of the newest series.
    pub m: usize,
    /// Forecast horizon.
    pub n: usize,
    /// Number of series per window.
    pub k: usize,
    /// Days between adjacent activation dates.
    pub s: usize,
}

impl Default for WindowSpec {
    /// 30 observed days, 330 forecast days, 180 series, daily stride.
    fn default() -> Self {
        WindowSpec {
            m: 30,
            n: 330,
            k: 180,
            s: 1,
        }
    }
}

impl WindowSpec {
    pub fn new(m: usize, n: usize, k: usize, s: usize) -> Result<Self> {
        let spec = WindowSpec { m, n, k, s };
        spec.validate()?;
        Ok(spec)
    }

    /// Small spec used for desk-scale experiments.
    pub fn desk() -> Self {
        WindowSpec {
            m: 10,
            n: 60,
            k: 20,
            s: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 || self.s == 0 {
            return Err(Error::InvalidConfig(format!(
                "window spec fields must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Input length `l = m + s·(k−1)`.
    pub fn input_len(&self) -> usize {
        self.m + self.s * (self.k - 1)
    }

    /// Number of observed values in column `j`: `m + s·(k−1−j)`.
    pub fn info_length(&self, j: usize) -> Result<usize> {
        if j >= self.k {
            return Err(Error::OutOfRange(format!("column {j} of a {}-column window", self.k)));
        }
        Ok(self.m + self.s * (self.k - 1 - j))
    }

    /// Leading structural zeros of column `j`.
    pub fn zero_prefix(&self, j: usize) -> usize {
        self.s * j
    }

    /// Activation date of column `j` for a window starting on `start`.
    pub fn column_activation(&self, start: Day, j: usize) -> Day {
        start.plus((self.s * j) as i64)
    }

    /// First forecast date (the day after the shared last input date).
    pub fn forecast_origin(&self, start: Day) -> Day {
        start.plus(self.input_len() as i64)
    }

    /// Window start whose newest column was activated on `activation`.
    pub fn start_for_last_activation(&self, activation: Day) -> Day {
        activation.plus(-((self.s * (self.k - 1)) as i64))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrapezoidWindow {
    pub channel: ChannelId,
    pub start_day: Day,
    /// `l × k`, zero-prefixed and date aligned.
    pub input: Array2<f64>,
    /// `n × k` date-aligned continuations, when requested.
    pub target: Option<Array2<f64>>,
    pub user_counts: Vec<u64>,
    pub spec: WindowSpec,
}

impl TrapezoidWindow {
    pub fn last_activation(&self) -> Day {
        self.spec.column_activation(self.start_day, self.spec.k - 1)
    }

    pub fn forecast_origin(&self) -> Day {
        self.spec.forecast_origin(self.start_day)
    }

    /// Input and target columns of the newest series.
    pub fn last_column(&self) -> (ArrayView1<'_, f64>, Option<ArrayView1<'_, f64>>) {
        let j = self.spec.k - 1;
        (
            self.input.column(j),
            self.target.as_ref().map(|t| t.column(j)),
        )
    }

    /// Writes the debug dump: a `#` header line, then `l` rows of `k`
    /// tab-separated values.
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        let WindowSpec { m, n, k, s } = self.spec;
        writeln!(w, "# {},{},m={m};n={n};k={k};s={s}", self.channel, self.start_day)?;
        for row in self.input.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join("\t"))?;
        }
        Ok(())
    }
}

/// Builds the window of `channel` whose earliest series activated on `start_day`.
pub fn build_window(
    dataset: &LtvDataset,
    channel: &ChannelId,
    start_day: Day,
    spec: WindowSpec,
    with_target: bool,
) -> Result<TrapezoidWindow> {
    spec.validate()?;
    let l = spec.input_len();
    let mut input = Array2::zeros((l, spec.k));
    let mut target = with_target.then(|| Array2::zeros((spec.n, spec.k)));
    let mut user_counts = Vec::with_capacity(spec.k);

    for j in 0..spec.k {
        let activation = spec.column_activation(start_day, j);
        let curve = dataset
            .curve(channel, activation)
            .ok_or_else(|| Error::MissingCurve {
                channel: channel.to_string(),
                date: activation.to_string(),
            })?;
        let info = l - spec.zero_prefix(j);
        let needed = if with_target { info + spec.n } else { info };
        if curve.len() < needed {
            return Err(Error::InsufficientHistory {
                needed,
                available: curve.len(),
            });
        }
        let values = curve.values();
        let prefix = spec.zero_prefix(j);
        for p in prefix..l {
            input[[p, j]] = values[p - prefix];
        }
        if let Some(t) = target.as_mut() {
            for h in 0..spec.n {
                t[[h, j]] = values[info + h];
            }
        }
        user_counts.push(curve.user_count());
    }

    Ok(TrapezoidWindow {
        channel: channel.clone(),
        start_day,
        input,
        target,
        user_counts,
        spec,
    })
}

#[derive(Clone, Debug, Default)]
pub struct WindowSet {
    pub windows: Vec<TrapezoidWindow>,
    /// Candidate start days that could not form a window.
    pub skipped: usize,
}

/// Every feasible window, ordered by channel id then start day.
///
/// Candidate start days are the activation dates present in the dataset.
pub fn enumerate_windows(dataset: &LtvDataset, spec: WindowSpec, with_target: bool) -> WindowSet {
    let mut set = WindowSet::default();
    for channel in dataset.channels() {
        for curve in dataset.channel_curves(&channel) {
            match build_window(dataset, &channel, curve.activation(), spec, with_target) {
                Ok(w) => set.windows.push(w),
                Err(_) => set.skipped += 1,
            }
        }
    }
    set
}

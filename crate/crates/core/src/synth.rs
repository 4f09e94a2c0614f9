//! Seeded synthetic LTV corpora: power-law decay, weekly cycles, holiday
//! spikes, persistent monthly level shifts and lognormal noise.

use std::collections::BTreeSet;

use chrono::Datelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ltv::{ChannelId, Day, HolidayCalendar, LtvCurve, LtvDataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub channels: usize,
    pub first_date: Day,
    pub last_date: Day,
    pub seed: u64,
    /// Sigma of the multiplicative lognormal noise.
    pub volatility: f64,
    /// Holiday dates are multiplied by `1 + holiday_boost`.
    pub holiday_boost: f64,
    /// Probability of a level shift per channel and calendar month.
    pub drift_prob: f64,
    pub decay_exponent_range: (f64, f64),
    pub user_count_range: (u64, u64),
    /// Longest curve generated; later activations are cut at `last_date`.
    pub max_retention_days: usize,
    /// Peak relative deviation of the weekly factor; 0 makes it flat.
    pub weekly_amplitude: f64,
    /// Day-0 value range the per-channel base is drawn from.
    pub base_value_range: (f64, f64),
    /// Sigma of the log level shift applied when a drift event fires.
    pub drift_scale: f64,
}

impl Default for GeneratorConfig {
    /// Six channels over thirty months of activation dates.
    fn default() -> Self {
        GeneratorConfig {
            channels: 6,
            first_date: Day::from_ymd(2022, 1, 1).expect("valid date"),
            last_date: Day::from_ymd(2024, 6, 30).expect("valid date"),
            seed: 7,
            volatility: 0.1,
            holiday_boost: 0.5,
            drift_prob: 0.3,
            decay_exponent_range: (0.3, 0.9),
            user_count_range: (50, 5000),
            max_retention_days: 100,
            weekly_amplitude: 0.25,
            base_value_range: (1.0, 20.0),
            drift_scale: 0.25,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.channels == 0 {
            return bad("channels must be positive");
        }
        if self.first_date >= self.last_date {
            return bad("first_date must precede last_date");
        }
        if !(self.volatility >= 0.0 && self.volatility.is_finite()) {
            return bad("volatility must be non-negative");
        }
        if !(self.holiday_boost >= 0.0 && self.holiday_boost.is_finite()) {
            return bad("holiday_boost must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.drift_prob) {
            return bad("drift_prob must lie in [0, 1]");
        }
        let (lo, hi) = self.decay_exponent_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("decay_exponent_range must be ordered positive reals");
        }
        let (lo, hi) = self.user_count_range;
        if !(lo >= 1 && lo <= hi) {
            return bad("user_count_range must be ordered positive integers");
        }
        let (lo, hi) = self.base_value_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("base_value_range must be ordered positive reals");
        }
        if self.max_retention_days == 0 {
            return bad("max_retention_days must be positive");
        }
        if !(0.0..1.0).contains(&self.weekly_amplitude) {
            return bad("weekly_amplitude must lie in [0, 1)");
        }
        if !(self.drift_scale >= 0.0 && self.drift_scale.is_finite()) {
            return bad("drift_scale must be non-negative");
        }
        Ok(())
    }

    pub fn channel_id(index: usize) -> ChannelId {
        ChannelId::new(format!("ch{index:02}")).expect("non-empty id")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fixed-date holidays plus the first week of October, each year in range.
pub fn default_calendar(first: Day, last: Day) -> HolidayCalendar {
    let fixed = [(1, 1), (2, 14), (5, 1), (5, 2), (5, 3), (6, 18), (11, 11), (12, 12), (12, 25)];
    let mut days = BTreeSet::new();
    for year in first.to_naive().year()..=last.to_naive().year() {
        let golden = (1..=7).map(|d| (10, d));
        for (m, d) in fixed.iter().copied().chain(golden) {
            if let Ok(day) = Day::from_ymd(year, m, d) {
                if day >= first && day <= last {
                    days.insert(day);
                }
            }
        }
    }
    HolidayCalendar::new(days)
}

fn month_index(day: Day) -> i64 {
    let d = day.to_naive();
    d.year() as i64 * 12 + d.month0() as i64
}

fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64 + 1);
    rng
}

/// Keyed on the activation date, so extending `last_date` only appends
/// values and never changes existing ones.
fn curve_rng(seed: u64, channel: usize, activation: Day) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0DE_0000_0000);
    rng.set_stream(((channel as u64) << 32) | activation.offset() as u32 as u64);
    rng
}

struct ChannelShape {
    base: f64,
    beta: f64,
    weekly: [f64; 7],
    /// Cumulative level per calendar month, starting at the first month.
    levels: Vec<f64>,
    first_month: i64,
}

impl ChannelShape {
    fn draw(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Self {
        let base = rng.gen_range(cfg.base_value_range.0..=cfg.base_value_range.1);
        let beta = rng.gen_range(cfg.decay_exponent_range.0..=cfg.decay_exponent_range.1);
        let phase = rng.gen_range(0.0..7.0);
        let amp = cfg.weekly_amplitude * rng.gen_range(0.5..=1.0);
        let mut weekly = [1.0; 7];
        for (d, w) in weekly.iter_mut().enumerate() {
            *w = 1.0 + amp * (std::f64::consts::TAU * (d as f64 + phase) / 7.0).sin();
        }
        let first_month = month_index(cfg.first_date);
        let months = (month_index(cfg.last_date) - first_month + 1) as usize;
        let mut levels = Vec::with_capacity(months);
        let mut level = 1.0;
        for _ in 0..months {
            let fire = rng.gen::<f64>() < cfg.drift_prob;
            let z: f64 = rng.sample(StandardNormal);
            if fire {
                level *= (cfg.drift_scale * z).exp();
            }
            levels.push(level);
        }
        ChannelShape {
            base,
            beta,
            weekly,
            levels,
            first_month,
        }
    }

    fn drift(&self, day: Day) -> f64 {
        let idx = (month_index(day) - self.first_month) as usize;
        self.levels[idx.min(self.levels.len() - 1)]
    }
}

/// Value at retention day `i` of the cohort activated on `t`:
/// `base · (i+1)^(−β) · weekly(t+i) · drift(t+i) · ε · holiday(t+i)`.
pub fn generate(cfg: &GeneratorConfig, calendar: &HolidayCalendar) -> Result<LtvDataset> {
    cfg.validate()?;
    let mut curves = Vec::new();
    let days = cfg.last_date.days_since(cfg.first_date) + 1;
    for c in 0..cfg.channels {
        let id = GeneratorConfig::channel_id(c);
        let shape = ChannelShape::draw(cfg, &mut channel_rng(cfg.seed, c));
        for offset in 0..days {
            let t = cfg.first_date.plus(offset);
            let mut rng = curve_rng(cfg.seed, c, t);
            let len = (cfg.max_retention_days as i64).min(days - offset) as usize;
            let users = rng.gen_range(cfg.user_count_range.0..=cfg.user_count_range.1);
            let mut values = Vec::with_capacity(len);
            for i in 0..len {
                let date = t.plus(i as i64);
                let z: f64 = rng.sample(StandardNormal);
                let mut v = shape.base * ((i + 1) as f64).powf(-shape.beta);
                v *= shape.weekly[date.weekday() as usize];
                v *= shape.drift(date);
                v *= (cfg.volatility * z).exp();
                if calendar.contains(date) {
                    v *= 1.0 + cfg.holiday_boost;
                }
                values.push(v);
            }
            curves.push(LtvCurve::new(id.clone(), t, values, users)?);
        }
    }
    Ok(LtvDataset::from_curves(curves)?.with_calendar(calendar.clone()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValueStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation over the mean; 0 when the mean is 0.
    pub cv: f64,
}

impl ValueStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return ValueStats::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = crate::preprocess::quantile_sorted(&sorted, 0.5);
        ValueStats {
            count: values.len(),
            mean,
            median,
            cv: if mean == 0.0 { 0.0 } else { var.sqrt() / mean },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub channel: ChannelId,
    pub curves: usize,
    pub first_activation: Day,
    pub last_activation: Day,
    pub values: ValueStats,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub channels: usize,
    pub activation_dates: usize,
    pub max_curve_len: usize,
    pub curves: usize,
    pub date_range: Option<(Day, Day)>,
    pub values: ValueStats,
    pub per_channel: Vec<ChannelSummary>,
}

pub fn describe(dataset: &LtvDataset) -> DatasetSummary {
    let mut all = Vec::new();
    let mut dates = BTreeSet::new();
    let mut max_len = 0;
    let mut per_channel = Vec::new();
    for ch in dataset.channels() {
        let mut vals = Vec::new();
        let mut first = None;
        let mut last = None;
        let mut count = 0;
        for c in dataset.channel_curves(&ch) {
            count += 1;
            dates.insert(c.activation());
            max_len = max_len.max(c.len());
            first = Some(first.map_or(c.activation(), |f: Day| f.min(c.activation())));
            last = Some(last.map_or(c.activation(), |l: Day| l.max(c.activation())));
            vals.extend_from_slice(c.values());
        }
        all.extend_from_slice(&vals);
        if let (Some(first_activation), Some(last_activation)) = (first, last) {
            per_channel.push(ChannelSummary {
                channel: ch,
                curves: count,
                first_activation,
                last_activation,
                values: ValueStats::of(&vals),
            });
        }
    }
    DatasetSummary {
        channels: per_channel.len(),
        activation_dates: dates.len(),
        max_curve_len: max_len,
        curves: per_channel.iter().map(|c| c.curves).sum(),
        date_range: dataset.date_range(),
        values: ValueStats::of(&all),
        per_channel,
    }
}

//! Channel-level LTV records and the canonical CSV dataset format.
//!
//! Dates are held as integer day offsets from 1970-01-01 so that all window
//! arithmetic is integer arithmetic; ISO-8601 parsing happens only here, at
//! the I/O boundary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = [
    "channel_id",
    "activation_date",
    "retention_day",
    "ltv",
    "user_count",
];

/// Opaque, non-empty channel identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ChannelId(String);

impl ChannelId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::InvalidValue("channel id must be non-empty".into()));
        }
        Ok(ChannelId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ChannelId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        ChannelId::new(s)
    }
}

impl From<ChannelId> for String {
    fn from(c: ChannelId) -> String {
        c.0
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A calendar day, stored as days since 1970-01-01.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Day(i32);

/// The day a cohort of users activated; retention day 0 of its curve.
pub type ActivationDate = Day;

const UNIX_EPOCH_CE_DAYS: i32 = 719_163;

impl Day {
    pub const fn from_offset(days: i32) -> Self {
        Day(days)
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self> {
        NaiveDate::from_ymd_opt(year, month, day)
            .map(Day::from_naive)
            .ok_or_else(|| Error::InvalidValue(format!("invalid date {year}-{month}-{day}")))
    }

    pub fn from_naive(date: NaiveDate) -> Self {
        Day(date.num_days_from_ce() - UNIX_EPOCH_CE_DAYS)
    }

    pub fn to_naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0 + UNIX_EPOCH_CE_DAYS)
            .expect("day offset within chrono's supported range")
    }

    pub fn offset(self) -> i32 {
        self.0
    }

    pub fn plus(self, days: i64) -> Day {
        Day(self.0 + days as i32)
    }

    /// Signed number of days from `earlier` to `self`.
    pub fn days_since(self, earlier: Day) -> i64 {
        i64::from(self.0) - i64::from(earlier.0)
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday(self) -> u32 {
        self.to_naive().weekday().num_days_from_monday()
    }
}

impl FromStr for Day {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map(Day::from_naive)
            .map_err(|e| Error::InvalidValue(format!("bad ISO-8601 date `{s}`: {e}")))
    }
}

impl TryFrom<String> for Day {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Day> for String {
    fn from(d: Day) -> String {
        d.to_string()
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

/// Daily LTV of one cohort (channel × activation date) by retention day.
#[derive(Clone, Debug, PartialEq)]
pub struct LtvCurve {
    channel: ChannelId,
    activation: ActivationDate,
    values: Vec<f64>,
    user_count: u64,
}

impl LtvCurve {
    pub fn new(
        channel: ChannelId,
        activation: ActivationDate,
        values: Vec<f64>,
        user_count: u64,
    ) -> Result<Self> {
        if user_count == 0 {
            return Err(Error::InvalidValue(format!(
                "user count for {channel} activated {activation} must be positive"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidValue(format!(
                "LTV for {channel} activated {activation} at retention day {i} is {v}"
            )));
        }
        Ok(LtvCurve {
            channel,
            activation,
            values,
            user_count,
        })
    }

    pub fn channel(&self) -> &ChannelId {
        &self.channel
    }

    pub fn activation(&self) -> ActivationDate {
        self.activation
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn user_count(&self) -> u64 {
        self.user_count
    }

    /// Calendar date of the last observed retention day, if any.
    pub fn last_observed(&self) -> Option<Day> {
        (!self.values.is_empty()).then(|| self.activation.plus(self.values.len() as i64 - 1))
    }

    /// Cumulative LTV over retention days `0..n_days` (half-open).
    pub fn ltv_n(&self, n_days: usize) -> Result<f64> {
        if n_days > self.values.len() {
            return Err(Error::InsufficientHistory {
                needed: n_days,
                available: self.values.len(),
            });
        }
        Ok(self.values[..n_days].iter().sum())
    }

    /// Values on retention days `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<&[f64]> {
        if start > end || end > self.values.len() {
            return Err(Error::OutOfRange(format!(
                "slice [{start}, {end}) of a curve with {} values",
                self.values.len()
            )));
        }
        Ok(&self.values[start..end])
    }
}

/// Holiday dates used for the holiday covariate and the synthetic generator.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    dates: BTreeSet<Day>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = Day>) -> Self {
        HolidayCalendar {
            dates: dates.into_iter().collect(),
        }
    }

    pub fn contains(&self, day: Day) -> bool {
        self.dates.contains(&day)
    }

    pub fn dates(&self) -> impl Iterator<Item = Day> + '_ {
        self.dates.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// One ISO-8601 date per line; `#` starts a comment.
    pub fn parse(reader: impl Read) -> Result<Self> {
        let mut dates = BTreeSet::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io("<holiday calendar>", e))?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let day = content.parse::<Day>().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            dates.insert(day);
        }
        Ok(HolidayCalendar { dates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file)
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# holiday calendar, one ISO-8601 date per line")?;
        for d in &self.dates {
            writeln!(w, "{d}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Immutable collection of curves keyed by (channel, activation date).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LtvDataset {
    curves: BTreeMap<(ChannelId, Day), LtvCurve>,
    calendar: HolidayCalendar,
}

impl LtvDataset {
    pub fn from_curves(curves: impl IntoIterator<Item = LtvCurve>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for curve in curves {
            let key = (curve.channel.clone(), curve.activation);
            if map.contains_key(&key) {
                return Err(Error::DuplicateObservation {
                    channel: key.0.to_string(),
                    date: key.1.to_string(),
                    retention_day: 0,
                });
            }
            map.insert(key, curve);
        }
        Ok(LtvDataset {
            curves: map,
            calendar: HolidayCalendar::default(),
        })
    }

    pub fn with_calendar(mut self, calendar: HolidayCalendar) -> Self {
        self.calendar = calendar;
        self
    }

    pub fn calendar(&self) -> &HolidayCalendar {
        &self.calendar
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curve(&self, channel: &ChannelId, activation: Day) -> Option<&LtvCurve> {
        // BTreeMap lookup needs an owned key; channel ids are short.
        self.curves.get(&(channel.clone(), activation))
    }

    pub fn curves(&self) -> impl Iterator<Item = &LtvCurve> {
        self.curves.values()
    }

    /// Curves of one channel, ascending by activation date.
    pub fn channel_curves<'a>(&'a self, channel: &'a ChannelId) -> impl DoubleEndedIterator<Item = &'a LtvCurve> {
        self.curves
            .range((channel.clone(), Day(i32::MIN))..=(channel.clone(), Day(i32::MAX)))
            .map(|(_, c)| c)
    }

    /// Channel ids in lexicographic order.
    pub fn channels(&self) -> Vec<ChannelId> {
        let mut out: Vec<ChannelId> = Vec::new();
        for (c, _) in self.curves.keys() {
            if out.last() != Some(c) {
                out.push(c.clone());
            }
        }
        out
    }

    /// (earliest activation date, latest observed date) over all curves.
    pub fn date_range(&self) -> Option<(Day, Day)> {
        let first = self.curves.keys().map(|(_, d)| *d).min()?;
        let last = self.curves.values().filter_map(LtvCurve::last_observed).max()?;
        Some((first, last))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file))
    }

    /// Parses the canonical CSV format. Rows may come in any order.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{}`", CSV_HEADER.join(",")),
            });
        }

        type Raw = (u64, BTreeMap<usize, f64>);
        let mut raw: BTreeMap<(ChannelId, Day), Raw> = BTreeMap::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let perr = |message: String| Error::Parse { line, message };
            let record = record.map_err(|e| perr(e.to_string()))?;
            if record.len() != CSV_HEADER.len() {
                return Err(perr(format!("expected 5 fields, got {}", record.len())));
            }
            let channel = ChannelId::new(record[0].trim()).map_err(|e| perr(e.to_string()))?;
            let date: Day = record[1].parse().map_err(|e: Error| perr(e.to_string()))?;
            let retention_day: usize = record[2]
                .trim()
                .parse()
                .map_err(|e| perr(format!("retention_day `{}`: {e}", &record[2])))?;
            let ltv: f64 = record[3]
                .trim()
                .parse()
                .map_err(|e| perr(format!("ltv `{}`: {e}", &record[3])))?;
            if !ltv.is_finite() || ltv < 0.0 {
                return Err(perr(format!("ltv must be a finite non-negative number, got {ltv}")));
            }
            let user_count: u64 = record[4]
                .trim()
                .parse()
                .map_err(|e| perr(format!("user_count `{}`: {e}", &record[4])))?;
            if user_count == 0 {
                return Err(perr("user_count must be positive".into()));
            }

            let entry = raw
                .entry((channel.clone(), date))
                .or_insert_with(|| (user_count, BTreeMap::new()));
            if entry.0 != user_count {
                return Err(perr(format!(
                    "user_count {user_count} differs from {} earlier in the same curve",
                    entry.0
                )));
            }
            if entry.1.insert(retention_day, ltv).is_some() {
                return Err(Error::DuplicateObservation {
                    channel: channel.to_string(),
                    date: date.to_string(),
                    retention_day,
                });
            }
        }

        let mut curves = BTreeMap::new();
        for ((channel, date), (user_count, days)) in raw {
            let mut values = Vec::with_capacity(days.len());
            for (expected, (day, v)) in days.into_iter().enumerate() {
                if day != expected {
                    return Err(Error::RetentionGap {
                        channel: channel.to_string(),
                        date: date.to_string(),
                        missing: expected,
                    });
                }
                values.push(v);
            }
            let curve = LtvCurve::new(channel.clone(), date, values, user_count)?;
            curves.insert((channel, date), curve);
        }
        Ok(LtvDataset {
            curves,
            calendar: HolidayCalendar::default(),
        })
    }

    /// Writes rows sorted by channel, activation date, retention day.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let to_err = |e: csv::Error| Error::io("<csv output>", e.into());
        wtr.write_record(CSV_HEADER).map_err(to_err)?;
        let mut ltv_buf = String::new();
        for curve in self.curves.values() {
            let channel = curve.channel.as_str();
            let date = curve.activation.to_string();
            let users = curve.user_count.to_string();
            for (day, v) in curve.values.iter().enumerate() {
                ltv_buf.clear();
                use std::fmt::Write as _;
                let _ = write!(ltv_buf, "{v}");
                wtr.write_record([channel, &date, &day.to_string(), &ltv_buf, &users])
                    .map_err(to_err)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv output>", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: Vec<f64>) -> LtvCurve {
        LtvCurve::new(
            ChannelId::new("ch").unwrap(),
            Day::from_ymd(2023, 1, 1).unwrap(),
            values,
            10,
        )
        .unwrap()
    }

    #[test]
    fn ltv_n_is_half_open() {
        assert_eq!(curve(vec![1.0, 2.0, 3.0]).ltv_n(2).unwrap(), 3.0);
        assert_eq!(curve(vec![0.0; 4]).ltv_n(4).unwrap(), 0.0);
        assert!(matches!(
            curve(vec![5.0]).ltv_n(3),
            Err(Error::InsufficientHistory { needed: 3, available: 1 })
        ));
    }

    #[test]
    fn slice_bounds() {
        let c = curve(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.slice(1, 3).unwrap(), &[2.0, 3.0]);
        assert!(c.slice(0, 0).unwrap().is_empty());
        assert!(matches!(c.slice(2, 10), Err(Error::OutOfRange(_))));
        assert!(matches!(c.slice(3, 2), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn rejects_negative_and_zero_users() {
        let ch = ChannelId::new("a").unwrap();
        let d = Day::from_offset(0);
        assert!(LtvCurve::new(ch.clone(), d, vec![1.0, -0.5], 3).is_err());
        assert!(LtvCurve::new(ch, d, vec![1.0], 0).is_err());
        assert!(ChannelId::new("  ").is_err());
    }

    #[test]
    fn day_round_trips_iso() {
        let d: Day = "2024-02-29".parse().unwrap();
        assert_eq!(d.to_string(), "2024-02-29");
        assert_eq!(Day::from_ymd(1970, 1, 1).unwrap().offset(), 0);
        assert_eq!(d.plus(1).to_string(), "2024-03-01");
        // 1970-01-01 was a Thursday.
        assert_eq!(Day::from_offset(0).weekday(), 3);
        assert!("2023-02-30".parse::<Day>().is_err());
    }

    const HEADER: &str = "channel_id,activation_date,retention_day,ltv,user_count\n";

    #[test]
    fn loads_minimal_file() {
        let text = format!("{HEADER}a,2023-01-01,0,1.5,7\na,2023-01-01,2,0.5,7\na,2023-01-01,1,1,7\n");
        let ds = LtvDataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        let c = ds.curves().next().unwrap();
        assert_eq!(c.values(), &[1.5, 1.0, 0.5]);
        assert_eq!(c.user_count(), 7);
    }

    #[test]
    fn load_errors() {
        let dup = format!("{HEADER}a,2023-01-01,0,1,7\na,2023-01-01,0,2,7\n");
        assert!(matches!(
            LtvDataset::read_csv(dup.as_bytes()),
            Err(Error::DuplicateObservation { retention_day: 0, .. })
        ));
        let gap = format!("{HEADER}a,2023-01-01,0,1,7\na,2023-01-01,1,1,7\na,2023-01-01,3,1,7\n");
        assert!(matches!(
            LtvDataset::read_csv(gap.as_bytes()),
            Err(Error::RetentionGap { missing: 2, .. })
        ));
        let neg = format!("{HEADER}a,2023-01-01,0,-1,7\n");
        assert!(matches!(LtvDataset::read_csv(neg.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad = format!("{HEADER}a,2023-13-01,0,1,7\n");
        assert!(matches!(LtvDataset::read_csv(bad.as_bytes()), Err(Error::Parse { .. })));
        let users = format!("{HEADER}a,2023-01-01,0,1,7\na,2023-01-01,1,1,8\n");
        assert!(matches!(LtvDataset::read_csv(users.as_bytes()), Err(Error::Parse { line: 3, .. })));
        assert!(LtvDataset::read_csv("x,y\n".as_bytes()).is_err());
    }

    #[test]
    fn calendar_parses_comments() {
        let cal = HolidayCalendar::parse("# new year\n2024-01-01\n\n2024-05-01 # labour\n".as_bytes())
            .unwrap();
        assert_eq!(cal.len(), 2);
        assert!(cal.contains("2024-05-01".parse().unwrap()));
        let mut out = Vec::new();
        cal.write(&mut out).unwrap();
        assert_eq!(HolidayCalendar::parse(out.as_slice()).unwrap(), cal);
    }

    #[test]
    fn channel_curves_are_scoped() {
        let mk = |c: &str, d: i32| {
            LtvCurve::new(ChannelId::new(c).unwrap(), Day::from_offset(d), vec![1.0], 1).unwrap()
        };
        let ds = LtvDataset::from_curves([mk("b", 2), mk("a", 1), mk("a", 0), mk("ab", 0)]).unwrap();
        let a = ChannelId::new("a").unwrap();
        let days: Vec<i32> = ds.channel_curves(&a).map(|c| c.activation().offset()).collect();
        assert_eq!(days, vec![0, 1]);
        assert_eq!(ds.channels().len(), 3);
        assert_eq!(ds.date_range(), Some((Day::from_offset(0), Day::from_offset(2))));
    }
}

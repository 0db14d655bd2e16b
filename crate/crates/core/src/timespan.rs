//! Local-time spans, fixed UTC offsets and the study window.
//!
//! Timestamps stay in UTC epoch seconds everywhere; conversion to local
//! wall-clock time happens through a single fixed offset (default +09:00).
//! The three non-overlapping spans partition the local day: day time
//! 08:00-15:59, evening 16:00-23:59, night 00:00-07:59.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

const SECS_PER_DAY: i64 = 86_400;

/// One of the reporting time spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeSpan {
    /// 08:00-15:59 local.
    Day,
    /// 16:00-23:59 local.
    Evening,
    /// 00:00-07:59 local.
    Night,
    /// Whole day, 00:00-23:59 local.
    Whole,
}

impl TimeSpan {
    pub const NON_WHOLE: [TimeSpan; 3] = [TimeSpan::Day, TimeSpan::Evening, TimeSpan::Night];
    pub const ALL: [TimeSpan; 4] =
        [TimeSpan::Day, TimeSpan::Evening, TimeSpan::Night, TimeSpan::Whole];
}

impl fmt::Display for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeSpan::Day => "day",
            TimeSpan::Evening => "evening",
            TimeSpan::Night => "night",
            TimeSpan::Whole => "whole",
        })
    }
}

impl FromStr for TimeSpan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(TimeSpan::Day),
            "evening" => Ok(TimeSpan::Evening),
            "night" => Ok(TimeSpan::Night),
            "whole" => Ok(TimeSpan::Whole),
            other => Err(format!(
                "unknown time span {other:?} (expected day, evening, night or whole)"
            )),
        }
    }
}

/// Fixed offset east of UTC, in seconds. Serializes as `+HH:MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UtcOffset(i32);

impl Serialize for UtcOffset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for UtcOffset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Default for UtcOffset {
    fn default() -> Self {
        UtcOffset(9 * 3600) // JST
    }
}

impl UtcOffset {
    pub fn from_seconds(secs: i32) -> Result<Self, String> {
        if secs.abs() > 18 * 3600 {
            return Err(format!("offset {secs}s exceeds +/-18:00"));
        }
        Ok(UtcOffset(secs))
    }

    pub fn seconds(self) -> i32 {
        self.0
    }

    fn local_secs(self, epoch: i64) -> i64 {
        epoch + self.0 as i64
    }

    /// Local wall-clock hour (0-23) of a UTC timestamp.
    pub fn local_hour(self, epoch: i64) -> u32 {
        (self.local_secs(epoch).rem_euclid(SECS_PER_DAY) / 3600) as u32
    }

    /// Local calendar date of a UTC timestamp. `None` only for timestamps
    /// outside chrono's representable date range.
    pub fn local_date(self, epoch: i64) -> Option<NaiveDate> {
        let days = self.local_secs(epoch).div_euclid(SECS_PER_DAY);
        let days_from_ce = days.checked_add(719_163)?; // 1970-01-01 in days from CE
        NaiveDate::from_num_days_from_ce_opt(i32::try_from(days_from_ce).ok()?)
    }

    /// UTC epoch seconds of local midnight at the start of `date`.
    pub fn date_start_epoch(self, date: NaiveDate) -> i64 {
        date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() - self.0 as i64
    }
}

impl fmt::Display for UtcOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { '-' } else { '+' };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{:02}:{:02}", abs / 3600, (abs % 3600) / 60)
    }
}

impl FromStr for UtcOffset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || format!("invalid UTC offset {s:?} (expected +HH:MM or -HH:MM)");
        let (sign, rest) = match s.as_bytes().first() {
            Some(b'+') => (1, &s[1..]),
            Some(b'-') => (-1, &s[1..]),
            Some(_) => (1, s),
            None => return Err(err()),
        };
        let (h, m) = match rest.split_once(':') {
            Some((h, m)) => (h, m),
            None => (rest, "0"),
        };
        let hours: i32 = h.parse().map_err(|_| err())?;
        let mins: i32 = m.parse().map_err(|_| err())?;
        if mins >= 60 {
            return Err(err());
        }
        UtcOffset::from_seconds(sign * (hours * 3600 + mins * 60)).map_err(|_| err())
    }
}

/// Maps a UTC timestamp to its non-whole local time span.
pub fn classify_timespan(epoch: i64, tz: UtcOffset) -> TimeSpan {
    match tz.local_hour(epoch) {
        8..=15 => TimeSpan::Day,
        16..=23 => TimeSpan::Evening,
        _ => TimeSpan::Night,
    }
}

/// Inclusive range of local study dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, String> {
        if end < start {
            return Err(format!("study window end {end} precedes start {start}"));
        }
        Ok(StudyWindow { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end
    }

    /// Half-open UTC epoch range covering the window's local dates.
    pub fn epoch_range(&self, tz: UtcOffset) -> std::ops::Range<i64> {
        let start = tz.date_start_epoch(self.start);
        let end = tz.date_start_epoch(self.end) + SECS_PER_DAY;
        start..end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        self.start.iter_days().take_while({
            let end = self.end;
            move |d| *d <= end
        })
    }
}

impl fmt::Display for StudyWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for StudyWindow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("invalid study window {s:?} (expected START..END)"))?;
        let parse = |d: &str| {
            NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                .map_err(|e| format!("invalid date {d:?} in study window: {e}"))
        };
        StudyWindow::new(parse(a)?, parse(b)?)
    }
}

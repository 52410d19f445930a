use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use chrono::{NaiveDate, NaiveTime, Timelike};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGranularity {
    Day,
    Minute,
}

/// A calendar date with an optional minute-resolution time of day.
///
/// Ordering is chronological; a day-granularity point sorts before any
/// minute-granularity point on the same date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimePoint {
    date: NaiveDate,
    time_of_day: Option<NaiveTime>,
}

impl TimePoint {
    pub fn day(date: NaiveDate) -> Self {
        TimePoint {
            date,
            time_of_day: None,
        }
    }

    /// Returns `None` when the hour or minute is out of range.
    pub fn at(date: NaiveDate, hour: u32, minute: u32) -> Option<Self> {
        NaiveTime::from_hms_opt(hour, minute, 0).map(|t| TimePoint {
            date,
            time_of_day: Some(t),
        })
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(TimePoint::day)
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn time_of_day(&self) -> Option<(u32, u32)> {
        self.time_of_day.map(|t| (t.hour(), t.minute()))
    }

    pub fn granularity(&self) -> TimeGranularity {
        if self.time_of_day.is_some() {
            TimeGranularity::Minute
        } else {
            TimeGranularity::Day
        }
    }
}

impl fmt::Display for TimePoint {
    /// Canonical form: `YYYY-MM-DD` or `YYYY-MM-DDTHH:MM`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.date.format("%Y-%m-%d"))?;
        if let Some(t) = self.time_of_day {
            write!(f, "T{:02}:{:02}", t.hour(), t.minute())?;
        }
        Ok(())
    }
}

impl FromStr for TimePoint {
    type Err = IngestError;

    /// Parses only the canonical form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IngestError::NoTimestamp { text: s.to_string() };
        let (date_part, time_part) = match s.split_once('T') {
            Some((d, t)) => (d, Some(t)),
            None => (s, None),
        };
        let date = NaiveDate::parse_from_str(date_part, "%Y-%m-%d").map_err(|_| bad())?;
        if date_part.len() != 10 {
            return Err(bad());
        }
        match time_part {
            None => Ok(TimePoint::day(date)),
            Some(t) => {
                let (h, m) = t.split_once(':').ok_or_else(bad)?;
                if h.len() != 2 || m.len() != 2 {
                    return Err(bad());
                }
                let h: u32 = h.parse().map_err(|_| bad())?;
                let m: u32 = m.parse().map_err(|_| bad())?;
                TimePoint::at(date, h, m).ok_or_else(bad)
            }
        }
    }
}

/// How year-last dates (`NN/NN/YYYY`, `NN-NN-YYYY`) are read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateOrder {
    /// `/` is day-first (`DD/MM/YYYY`), `-` is month-first (`MM-DD-YYYY`).
    #[default]
    Auto,
    DayFirst,
    MonthFirst,
}

impl FromStr for DateOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(DateOrder::Auto),
            "dmy" => Ok(DateOrder::DayFirst),
            "mdy" => Ok(DateOrder::MonthFirst),
            other => Err(format!("unknown date order `{other}` (expected auto, dmy or mdy)")),
        }
    }
}

static TIMESTAMP_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)
        (?:
            (?P<iy>\d{4})-(?P<im>\d{2})-(?P<id>\d{2})
          | (?P<s1>\d{2})/(?P<s2>\d{2})/(?P<sy>\d{4})
          | (?P<h1>\d{2})-(?P<h2>\d{2})-(?P<hy>\d{4})
        )
        (?:[\ T](?P<hh>\d{2}):(?P<mm>\d{2}))?",
    )
    .expect("timestamp pattern")
});

pub fn parse_timestamp(text: &str) -> Result<TimePoint, IngestError> {
    parse_timestamp_with(text, DateOrder::Auto)
}

/// Finds the first accepted timestamp anywhere in `text`.
pub fn parse_timestamp_with(text: &str, order: DateOrder) -> Result<TimePoint, IngestError> {
    find_timestamp(text, order)
        .map(|(tp, _)| tp)
        .ok_or_else(|| IngestError::NoTimestamp { text: text.to_string() })
}

/// Like [`parse_timestamp_with`] but also returns the byte span of the match.
pub(crate) fn find_timestamp(text: &str, order: DateOrder) -> Option<(TimePoint, (usize, usize))> {
    let bytes = text.as_bytes();
    let mut pos = 0;
    while pos <= text.len() {
        let caps = TIMESTAMP_RE.captures_at(text, pos)?;
        let whole = caps.get(0).expect("group 0");
        let (start, end) = (whole.start(), whole.end());
        let mut candidate = date_from_captures(&caps, order);
        // An invalid trailing time poisons the whole candidate.
        if let (Some(tp), Some(hh), Some(mm)) = (candidate, caps.name("hh"), caps.name("mm")) {
            let h: u32 = hh.as_str().parse().unwrap_or(99);
            let m: u32 = mm.as_str().parse().unwrap_or(99);
            candidate = TimePoint::at(tp.date, h, m);
        }
        if let Some(tp) = candidate {
            if left_boundary_ok(bytes, start) && right_boundary_ok(bytes, end) {
                return Some((tp, (start, end)));
            }
        }
        pos = next_char_boundary(text, start);
    }
    None
}

fn date_from_captures(caps: &regex::Captures<'_>, order: DateOrder) -> Option<TimePoint> {
    let num = |name: &str| caps.name(name).and_then(|m| m.as_str().parse::<u32>().ok());
    let (year, month, day) = if let Some(y) = num("iy") {
        (y, num("im")?, num("id")?)
    } else if let Some(y) = num("sy") {
        let (a, b) = (num("s1")?, num("s2")?);
        match order {
            DateOrder::Auto | DateOrder::DayFirst => (y, b, a),
            DateOrder::MonthFirst => (y, a, b),
        }
    } else {
        let y = num("hy")?;
        let (a, b) = (num("h1")?, num("h2")?);
        match order {
            DateOrder::Auto | DateOrder::MonthFirst => (y, a, b),
            DateOrder::DayFirst => (y, b, a),
        }
    };
    TimePoint::from_ymd(year as i32, month, day)
}

fn left_boundary_ok(bytes: &[u8], start: usize) -> bool {
    match start.checked_sub(1).map(|i| bytes[i]) {
        None => true,
        Some(b) => !(b.is_ascii_digit() || matches!(b, b'/' | b'-' | b'.' | b':')),
    }
}

fn right_boundary_ok(bytes: &[u8], end: usize) -> bool {
    match bytes.get(end) {
        None => true,
        Some(b) if b.is_ascii_digit() || matches!(b, b'/' | b'-' | b':') => false,
        Some(b'.') => !bytes.get(end + 1).is_some_and(|n| n.is_ascii_digit()),
        Some(_) => true,
    }
}

fn next_char_boundary(text: &str, from: usize) -> usize {
    let mut i = from + 1;
    while i < text.len() && !text.is_char_boundary(i) {
        i += 1;
    }
    i
}

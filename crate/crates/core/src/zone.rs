//! Rendering zone. Instants are stored as UTC; the zone only matters when a
//! date or wall-clock time is shown or used for day bucketing.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, Local, NaiveDate, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use thiserror::Error;

use crate::codec::DeviceInstant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZoneConfig {
    Utc,
    Fixed(FixedOffset),
    Named(Tz),
    /// The host's zone.
    #[default]
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognised zone {0:?} (use UTC, local, an offset such as -06:00, or an IANA name)")]
pub struct ZoneParseError(String);

impl FromStr for ZoneConfig {
    type Err = ZoneParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "utc" | "z" | "gmt" => return Ok(ZoneConfig::Utc),
            "local" | "host" => return Ok(ZoneConfig::Local),
            _ => {}
        }
        let offset_part = s.strip_prefix("UTC").or_else(|| s.strip_prefix("utc")).unwrap_or(s);
        if let Some(offset) = parse_offset(offset_part) {
            return Ok(ZoneConfig::Fixed(offset));
        }
        s.parse::<Tz>().map(ZoneConfig::Named).map_err(|_| ZoneParseError(s.to_string()))
    }
}

/// `+HH`, `-HH:MM`, `+HHMM`.
fn parse_offset(s: &str) -> Option<FixedOffset> {
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => return None,
    };
    let digits: String = rest.chars().filter(|c| *c != ':').collect();
    if digits.is_empty() || digits.len() > 4 || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let (h, m) = match digits.len() {
        1 | 2 => (digits.parse::<i32>().ok()?, 0),
        3 => (digits[..1].parse::<i32>().ok()?, digits[1..].parse::<i32>().ok()?),
        _ => (digits[..2].parse::<i32>().ok()?, digits[2..].parse::<i32>().ok()?),
    };
    if m >= 60 {
        return None;
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60))
}

impl fmt::Display for ZoneConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZoneConfig::Utc => f.write_str("UTC"),
            ZoneConfig::Fixed(o) => write!(f, "{o}"),
            ZoneConfig::Named(tz) => f.write_str(tz.name()),
            ZoneConfig::Local => f.write_str("local"),
        }
    }
}

/// Wall-clock rendering of a whole second.
fn naive_local(zone: &ZoneConfig, unix_seconds: i64) -> NaiveDateTime {
    let utc = DateTime::<Utc>::from_timestamp(unix_seconds, 0).unwrap_or_default();
    match zone {
        ZoneConfig::Utc => utc.naive_utc(),
        ZoneConfig::Fixed(o) => utc.with_timezone(o).naive_local(),
        ZoneConfig::Named(tz) => utc.with_timezone(tz).naive_local(),
        ZoneConfig::Local => utc.with_timezone(&Local).naive_local(),
    }
}

fn earliest_utc<T: TimeZone>(tz: &T, local: &NaiveDateTime) -> Option<i64> {
    tz.from_local_datetime(local).earliest().map(|dt| dt.timestamp())
}

impl ZoneConfig {
    /// `YYYY-MM-DD HH:MM:SS.cc`, fraction rounded to the nearest centisecond.
    pub fn format_instant(&self, instant: DeviceInstant) -> String {
        let (secs, cs) = instant.centiseconds();
        format!("{}.{cs:02}", naive_local(self, secs).format("%Y-%m-%d %H:%M:%S"))
    }

    /// `HH:MM:SS.cc`.
    pub fn format_time_of_day(&self, instant: DeviceInstant) -> String {
        let (secs, cs) = instant.centiseconds();
        format!("{}.{cs:02}", naive_local(self, secs).format("%H:%M:%S"))
    }

    /// Calendar date of the instant in this zone (exact, not rounded).
    pub fn date_of(&self, instant: DeviceInstant) -> NaiveDate {
        naive_local(self, i64::from(instant.posix_seconds)).date()
    }

    /// Unix seconds of local midnight starting `date`.
    pub fn midnight_unix(&self, date: NaiveDate) -> i64 {
        let local = date.and_hms_opt(0, 0, 0).unwrap_or_default();
        let found = match self {
            ZoneConfig::Utc => Some(local.and_utc().timestamp()),
            ZoneConfig::Fixed(o) => earliest_utc(o, &local),
            ZoneConfig::Named(tz) => earliest_utc(tz, &local),
            ZoneConfig::Local => earliest_utc(&Local, &local),
        };
        // Midnight skipped by a DST jump: fall back to one hour later.
        found.unwrap_or_else(|| self.midnight_unix_after_gap(date))
    }

    fn midnight_unix_after_gap(&self, date: NaiveDate) -> i64 {
        let local = date.and_hms_opt(1, 0, 0).unwrap_or_default();
        let found = match self {
            ZoneConfig::Utc => Some(local.and_utc().timestamp()),
            ZoneConfig::Fixed(o) => earliest_utc(o, &local),
            ZoneConfig::Named(tz) => earliest_utc(tz, &local),
            ZoneConfig::Local => earliest_utc(&Local, &local),
        };
        found.unwrap_or_else(|| local.and_utc().timestamp()) - 3600
    }

    /// Seconds from local midnight of `date` to `instant`. Negative or above
    /// 86 400 when the instant lies on another day.
    pub fn seconds_into_day(&self, date: NaiveDate, instant: DeviceInstant) -> f64 {
        instant.to_unix_seconds() - self.midnight_unix(date) as f64
    }
}

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Gregorian month length.
pub const SECONDS_PER_MONTH: f64 = 365.2425 * 86_400.0 / 12.0;

/// Parses an ISO-8601 timestamp into UTC epoch seconds.
///
/// Accepts RFC 3339 (`2017-03-01T12:00:00Z`, offsets allowed), a naive
/// date-time taken as UTC, or a bare date.
pub fn parse_iso(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_iso(ts: i64) -> String {
    match Utc.timestamp_opt(ts, 0).single() {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => ts.to_string(),
    }
}

/// Absolute calendar month number, `year * 12 + month0`.
pub fn month_key(ts: i64) -> i64 {
    let dt = Utc
        .timestamp_opt(ts, 0)
        .single()
        .expect("timestamp within chrono range");
    dt.year() as i64 * 12 + dt.month0() as i64
}

/// Epoch seconds of 00:00:00 UTC on the first day of month `key`.
pub fn month_start(key: i64) -> i64 {
    let year = key.div_euclid(12) as i32;
    let month = key.rem_euclid(12) as u32 + 1;
    Utc.with_ymd_and_hms(year, month, 1, 0, 0, 0)
        .single()
        .expect("valid calendar month")
        .timestamp()
}

/// First and last instant of a dataset, `t_s < t_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timespan {
    pub start: i64,
    pub end: i64,
}

impl Timespan {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidConfig(format!(
                "timespan start {start} must precede end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, ts: i64) -> bool {
        (self.start..=self.end).contains(&ts)
    }

    /// `(ts - t_s) / (t_f - t_s)`; errors outside the span.
    pub fn normalize(&self, ts: i64) -> Result<f64> {
        if !self.contains(ts) {
            return Err(Error::OutOfSpan {
                ts,
                start: self.start,
                end: self.end,
            });
        }
        Ok(self.fraction(ts))
    }

    /// Like [`normalize`](Self::normalize) but clamps to `[0, 1]`.
    pub fn normalize_clamped(&self, ts: i64) -> f64 {
        self.fraction(ts.clamp(self.start, self.end))
    }

    fn fraction(&self, ts: i64) -> f64 {
        (ts - self.start) as f64 / (self.end - self.start) as f64
    }

    /// Span length in mean months; converts normalized-time gaps to months.
    pub fn months(&self) -> f64 {
        (self.end - self.start) as f64 / SECONDS_PER_MONTH
    }

    /// Calendar month offset of `ts` from the month containing `t_s`.
    pub fn month_index(&self, ts: i64) -> i64 {
        month_key(ts) - month_key(self.start)
    }

    pub fn month_count(&self) -> usize {
        (self.month_index(self.end) + 1) as usize
    }
}

/// Normalizes `ts` into `[0, 1]` over `span`.
pub fn normalize_ts(ts: i64, span: &Timespan) -> Result<f64> {
    span.normalize(ts)
}

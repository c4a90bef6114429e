//! Uniformly sampled time series and calendar helpers.

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sentinel stored in place of a missing observation.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(x: f64) -> bool {
    x.is_nan()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("time series must hold at least one value")]
    Empty,
    #[error("resolution must be a positive number of seconds, got {0}")]
    BadResolution(i64),
}

/// Equally spaced timestamped values. Gaps are explicit [`MISSING`] entries,
/// never omitted indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    start: DateTime<Utc>,
    resolution_secs: i64,
    values: Vec<f64>,
    unit: String,
    utc_offset_minutes: i32,
}

impl TimeSeries {
    pub fn new(
        start: DateTime<Utc>,
        resolution_secs: i64,
        values: Vec<f64>,
        unit: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        if resolution_secs <= 0 {
            return Err(SeriesError::BadResolution(resolution_secs));
        }
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        Ok(Self {
            start,
            resolution_secs,
            values,
            unit: unit.into(),
            utc_offset_minutes: 0,
        })
    }

    /// Hourly series starting at `start`.
    pub fn hourly(
        start: DateTime<Utc>,
        values: Vec<f64>,
        unit: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        Self::new(start, 3600, values, unit)
    }

    /// Records the site's fixed offset from UTC, used for calendar features.
    pub fn with_utc_offset(mut self, minutes: i32) -> Self {
        self.utc_offset_minutes = minutes;
        self
    }

    /// Same timing metadata, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn resolution_secs(&self) -> i64 {
        self.resolution_secs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn utc_offset_minutes(&self) -> i32 {
        self.utc_offset_minutes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::seconds(self.resolution_secs * i as i64)
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        (0..self.len()).map(|i| self.timestamp(i)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| is_missing(**v)).count()
    }

    /// True when both series share start, resolution and length.
    pub fn aligned_with(&self, other: &TimeSeries) -> bool {
        self.start == other.start
            && self.resolution_secs == other.resolution_secs
            && self.len() == other.len()
    }
}

pub fn offset(minutes: i32) -> FixedOffset {
    FixedOffset::east_opt(minutes * 60).unwrap_or_else(|| FixedOffset::east_opt(0).unwrap())
}

/// Wall-clock time at a site with a fixed UTC offset.
pub fn local_datetime(ts: DateTime<Utc>, utc_offset_minutes: i32) -> NaiveDateTime {
    ts.with_timezone(&offset(utc_offset_minutes)).naive_local()
}

pub fn local_date(ts: DateTime<Utc>, utc_offset_minutes: i32) -> NaiveDate {
    local_datetime(ts, utc_offset_minutes).date()
}

/// Converts a site-local wall-clock time to UTC.
pub fn local_to_utc(local: NaiveDateTime, utc_offset_minutes: i32) -> DateTime<Utc> {
    offset(utc_offset_minutes)
        .from_local_datetime(&local)
        .single()
        .expect("fixed offsets are unambiguous")
        .with_timezone(&Utc)
}

/// UTC instant of local midnight starting `date`.
pub fn local_midnight(date: NaiveDate, utc_offset_minutes: i32) -> DateTime<Utc> {
    local_to_utc(date.and_hms_opt(0, 0, 0).unwrap(), utc_offset_minutes)
}

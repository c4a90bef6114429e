//! Engineered features: clearness index and weather class, calendar
//! encodings, lags, one-hot codes, min-max normalisation, and assembly of
//! the tagged feature frame.

mod build;
mod normalize;
mod weather;

use std::f64::consts::TAU;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::FrameError;
use crate::series::{self, TimeSeries, MISSING};

pub use build::{build_frame, build_from_hourly, columns, FeatureRecipe, MetColumns, MeteorologyMode, SolarAngles};
pub use normalize::{fit_normalizer, ColumnScale, NormalizationParams};
pub use weather::{
    classify_weather, clearness_index, DailyIrradiance, WeatherType, PARTIALLY_CLOUDY_MAX_KD, SUNNY_MAX_KD,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("daily GHI sum is zero")]
    ZeroIrradiance,
    #[error("irradiance must be finite and non-negative")]
    NegativeIrradiance,
    #[error("clearness index {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("lag must be at least one step")]
    ZeroLag,
    #[error("column `{0}` has fewer than two distinct finite training values")]
    DegenerateColumn(String),
    #[error("category id {id} not in vocabulary of size {size}")]
    UnknownCategory { id: u32, size: usize },
    #[error("no normalisation parameters for column `{0}`")]
    UnknownColumn(String),
    #[error("inputs misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Sine and cosine of the local calendar month (1..=12) on a 12-month cycle.
pub fn month_cyclic(ts: DateTime<Utc>, utc_offset_minutes: i32) -> (f64, f64) {
    let month = series::local_date(ts, utc_offset_minutes).month() as f64;
    let angle = TAU * month / 12.0;
    (angle.sin(), angle.cos())
}

/// Southern-hemisphere meteorological seasons by calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Summer,
    Autumn,
    Winter,
    Spring,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Summer, Season::Autumn, Season::Winter, Season::Spring];

    pub fn of_month(month: u32) -> Season {
        match month {
            12 | 1 | 2 => Season::Summer,
            3..=5 => Season::Autumn,
            6..=8 => Season::Winter,
            _ => Season::Spring,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
            Season::Spring => "spring",
        }
    }

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn vocabulary() -> Vec<String> {
        Self::ALL.iter().map(|s| s.label().to_owned()).collect()
    }
}

/// `out[t] = series[t - lag]`; the first `lag` entries are missing.
pub fn make_lags(series: &TimeSeries, lag: usize) -> Result<Vec<f64>, FeatureError> {
    lag_values(series.values(), lag)
}

pub fn lag_values(values: &[f64], lag: usize) -> Result<Vec<f64>, FeatureError> {
    if lag == 0 {
        return Err(FeatureError::ZeroLag);
    }
    Ok((0..values.len())
        .map(|t| if t >= lag { values[t - lag] } else { MISSING })
        .collect())
}

/// Indicator columns, one per vocabulary entry. Missing entries produce an
/// all-zero row.
pub fn one_hot(ids: &[Option<u32>], vocabulary_size: usize) -> Result<Vec<Vec<f64>>, FeatureError> {
    let mut out = vec![vec![0.0; ids.len()]; vocabulary_size];
    for (row, id) in ids.iter().enumerate() {
        if let Some(id) = *id {
            let slot = out.get_mut(id as usize).ok_or(FeatureError::UnknownCategory {
                id,
                size: vocabulary_size,
            })?;
            slot[row] = 1.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn at(month: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2019, month, 15, 12, 0, 0).unwrap()
    }

    #[test]
    fn month_encoding_quarter_points() {
        let close = |(s, c): (f64, f64), (es, ec): (f64, f64)| (s - es).abs() < 1e-12 && (c - ec).abs() < 1e-12;
        assert!(close(month_cyclic(at(12), 0), (0.0, 1.0)));
        assert!(close(month_cyclic(at(3), 0), (1.0, 0.0)));
        assert!(close(month_cyclic(at(6), 0), (0.0, -1.0)));
    }

    #[test]
    fn month_uses_local_time() {
        // 2019-11-30 15:00 UTC is already December 1st in Alice Springs.
        let ts = Utc.with_ymd_and_hms(2019, 11, 30, 15, 0, 0).unwrap();
        let (s, c) = month_cyclic(ts, 570);
        assert!(s.abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn southern_seasons() {
        assert_eq!(Season::of_month(1), Season::Summer);
        assert_eq!(Season::of_month(4), Season::Autumn);
        assert_eq!(Season::of_month(7), Season::Winter);
        assert_eq!(Season::of_month(10), Season::Spring);
        assert_eq!(Season::of_month(12), Season::Summer);
    }

    #[test]
    fn lag_shifts_values() {
        let out = lag_values(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert!(out[0].is_nan());
        assert_eq!(&out[1..], &[1.0, 2.0, 3.0]);
        assert!(matches!(lag_values(&[1.0], 0), Err(FeatureError::ZeroLag)));
    }

    #[test]
    fn daily_periodic_series_equals_its_lag() {
        let v: Vec<f64> = (0..24 * 5).map(|i| ((i % 24) as f64).sqrt()).collect();
        let lagged = lag_values(&v, 24).unwrap();
        assert!(lagged[..24].iter().all(|x| x.is_nan()));
        assert_eq!(&lagged[24..], &v[24..]);
        let constant = lag_values(&[2.5; 30], 24).unwrap();
        assert!(constant[24..].iter().all(|&x| x == 2.5));
    }

    #[test]
    fn one_hot_rows() {
        let sunny = one_hot(&[Some(0)], 3).unwrap();
        assert_eq!(sunny, vec![vec![1.0], vec![0.0], vec![0.0]]);
        let eye = one_hot(&[Some(0), Some(1), Some(2)], 3).unwrap();
        for (i, col) in eye.iter().enumerate() {
            for (j, v) in col.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(matches!(one_hot(&[Some(3)], 3), Err(FeatureError::UnknownCategory { id: 3, .. })));
    }

    proptest! {
        #[test]
        fn month_encoding_lies_on_unit_circle(month in 1u32..=12, day in 1u32..=28, hour in 0u32..24) {
            let ts = Utc.with_ymd_and_hms(2019, month, day, hour, 0, 0).unwrap();
            let (s, c) = month_cyclic(ts, 570);
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }

        #[test]
        fn one_hot_has_single_one_per_row(ids in prop::collection::vec(0u32..5, 1..40)) {
            let ids: Vec<Option<u32>> = ids.into_iter().map(Some).collect();
            let cols = one_hot(&ids, 5).unwrap();
            for row in 0..ids.len() {
                prop_assert_eq!(cols.iter().map(|c| c[row]).sum::<f64>(), 1.0);
            }
        }
    }
}

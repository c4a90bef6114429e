//! Daily clearness index and the weather classes derived from it.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::scalar::Real;

/// Upper bound of the sunny class (inclusive).
pub const SUNNY_MAX_KD: f64 = 0.15;
/// Upper bound of the partially cloudy class (inclusive).
pub const PARTIALLY_CLOUDY_MAX_KD: f64 = 0.45;

/// Hourly irradiance of one calendar day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyIrradiance<T: Real = f64> {
    pub date: NaiveDate,
    pub ghi_hours: Vec<T>,
    pub dhi_hours: Vec<T>,
}

impl<T: Real> DailyIrradiance<T> {
    pub fn new(date: NaiveDate, ghi_hours: Vec<T>, dhi_hours: Vec<T>) -> Result<Self, FeatureError> {
        if ghi_hours.len() != dhi_hours.len() {
            return Err(FeatureError::Misaligned("GHI and DHI hours differ".into()));
        }
        if ghi_hours.iter().chain(&dhi_hours).any(|v| *v < T::zero() || v.is_nan()) {
            return Err(FeatureError::NegativeIrradiance);
        }
        Ok(Self {
            date,
            ghi_hours,
            dhi_hours,
        })
    }

    pub fn clearness_index(&self) -> Result<T, FeatureError> {
        clearness_index(&self.dhi_hours, &self.ghi_hours)
    }

    pub fn weather(&self) -> WeatherType {
        self.clearness_index()
            .ok()
            .and_then(|k| classify_weather(k).ok())
            .unwrap_or(WeatherType::OvercastRainy)
    }
}

/// Daily clearness index: summed diffuse over summed global irradiance,
/// clipped to [0, 1].
///
/// Fails with [`FeatureError::ZeroIrradiance`] when the global sum is not
/// positive; callers classify such days as overcast.
pub fn clearness_index<T: Real>(dhi: &[T], ghi: &[T]) -> Result<T, FeatureError> {
    if dhi.len() != ghi.len() {
        return Err(FeatureError::Misaligned("GHI and DHI hours differ".into()));
    }
    let g: T = ghi.iter().copied().sum();
    let d: T = dhi.iter().copied().sum();
    if !(g > T::zero()) {
        return Err(FeatureError::ZeroIrradiance);
    }
    Ok((d / g).max(T::zero()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherType {
    Sunny = 1,
    PartiallyCloudy = 2,
    OvercastRainy = 3,
}

impl WeatherType {
    pub const ALL: [WeatherType; 3] = [
        WeatherType::Sunny,
        WeatherType::PartiallyCloudy,
        WeatherType::OvercastRainy,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            WeatherType::Sunny => "sunny",
            WeatherType::PartiallyCloudy => "cloudy",
            WeatherType::OvercastRainy => "rainy",
        }
    }

    pub fn vocabulary() -> Vec<String> {
        Self::ALL.iter().map(|w| w.label().to_owned()).collect()
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    /// Position in [`WeatherType::vocabulary`].
    pub fn id(self) -> u32 {
        self as u32 - 1
    }
}

impl fmt::Display for WeatherType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Maps a clearness index to its weather class. Shared boundaries belong to
/// the clearer class: 0.15 is sunny, 0.45 partially cloudy.
pub fn classify_weather<T: Real>(kd: T) -> Result<WeatherType, FeatureError> {
    if kd.is_nan() || kd < T::zero() || kd > T::one() {
        return Err(FeatureError::OutOfRange(kd.to_f64_lossy()));
    }
    Ok(if kd <= T::lit(SUNNY_MAX_KD) {
        WeatherType::Sunny
    } else if kd <= T::lit(PARTIALLY_CLOUDY_MAX_KD) {
        WeatherType::PartiallyCloudy
    } else {
        WeatherType::OvercastRainy
    })
}

use std::fmt;
use std::str::FromStr;

use chrono::Datelike;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{classify_weather, clearness_index, lag_values, month_cyclic, FeatureError, Season, WeatherType};
use crate::frame::{FeatureFrame, FeatureTag};
use crate::ingest::PlantSpec;
use crate::series::TimeSeries;

/// Column names produced by [`build_frame`].
pub mod columns {
    pub const POWER: &str = "power";
    pub const GHI: &str = "ghi";
    pub const DHI: &str = "dhi";
    pub const TEMPERATURE: &str = "temperature";
    pub const RAINFALL: &str = "rainfall";
    pub const HUMIDITY: &str = "humidity";
    pub const WEATHER: &str = "weather";
    pub const SEASON: &str = "season";
    pub const MONTH_SIN: &str = "month_sin";
    pub const MONTH_COS: &str = "month_cos";
    pub const ZENITH: &str = "zenith";
    pub const AZIMUTH: &str = "azimuth";
    pub const MANUFACTURER: &str = "manufacturer";
    pub const PV_TECHNOLOGY: &str = "pv_technology";
    pub const ARRAY_STRUCTURE: &str = "array_structure";
    pub const ARRAY_RATING: &str = "array_rating";
    pub const INSTALL_YEAR: &str = "install_year";

    pub fn lag(lag: usize) -> String {
        format!("power_lag_{lag}")
    }
}

/// Whether meteorological measurements count as known future inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeteorologyMode {
    Available,
    Unavailable,
}

impl MeteorologyMode {
    pub const ALL: [MeteorologyMode; 2] = [MeteorologyMode::Available, MeteorologyMode::Unavailable];

    pub fn label(self) -> &'static str {
        match self {
            MeteorologyMode::Available => "available",
            MeteorologyMode::Unavailable => "unavailable",
        }
    }

    fn real_tag(self) -> FeatureTag {
        match self {
            MeteorologyMode::Available => FeatureTag::KNOWN_REAL,
            MeteorologyMode::Unavailable => FeatureTag::UNKNOWN_REAL,
        }
    }

    fn categorical_tag(self) -> FeatureTag {
        match self {
            MeteorologyMode::Available => FeatureTag::KNOWN_CATEGORICAL,
            MeteorologyMode::Unavailable => FeatureTag::UNKNOWN_CATEGORICAL,
        }
    }
}

impl fmt::Display for MeteorologyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MeteorologyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "available" => Ok(MeteorologyMode::Available),
            "unavailable" => Ok(MeteorologyMode::Unavailable),
            other => Err(format!("unknown meteorology mode `{other}`")),
        }
    }
}

/// Everything needed to rebuild a feature frame identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecipe {
    pub lags: Vec<usize>,
    pub meteorology_mode: MeteorologyMode,
    /// Rows used to fit min-max parameters.
    pub normalization: String,
    pub vocabularies: IndexMap<String, Vec<String>>,
}

impl FeatureRecipe {
    pub fn new(meteorology_mode: MeteorologyMode) -> Self {
        let mut vocabularies = IndexMap::new();
        vocabularies.insert(columns::WEATHER.to_owned(), WeatherType::vocabulary());
        vocabularies.insert(columns::SEASON.to_owned(), Season::vocabulary());
        Self {
            lags: vec![24],
            meteorology_mode,
            normalization: "min_max_training_rows".to_owned(),
            vocabularies,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("recipe serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Hourly meteorology aligned with the power series. Optional channels that
/// are absent from the source data are left out of the frame.
#[derive(Debug, Clone, Default)]
pub struct MetColumns {
    pub ghi: Vec<f64>,
    pub dhi: Vec<f64>,
    pub temperature: Option<Vec<f64>>,
    pub rainfall: Option<Vec<f64>>,
    pub humidity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct SolarAngles {
    pub zenith: Vec<f64>,
    pub azimuth: Vec<f64>,
}

/// Assembles the tagged feature frame of one plant.
///
/// Power is the time-varying unknown target; lags, calendar encodings and
/// solar angles are time-varying known; meteorology and the daily weather
/// class are known or unknown according to the recipe's mode. Plant
/// properties become static fields.
pub fn build_frame(
    plant: &PlantSpec,
    power: &TimeSeries,
    met: &MetColumns,
    angles: Option<&SolarAngles>,
    recipe: &FeatureRecipe,
) -> Result<FeatureFrame, FeatureError> {
    let n = power.len();
    let check = |name: &str, v: &[f64]| {
        if v.len() == n {
            Ok(())
        } else {
            Err(FeatureError::Misaligned(format!("{name} has {} rows, power has {n}", v.len())))
        }
    };
    check(columns::GHI, &met.ghi)?;
    check(columns::DHI, &met.dhi)?;
    let mode = recipe.meteorology_mode;
    let mut frame = FeatureFrame::over(power);
    for (name, vocab) in &recipe.vocabularies {
        frame.register_vocabulary(name, vocab.clone())?;
    }

    frame.add_real(columns::POWER, FeatureTag::UNKNOWN_REAL, Some("kW"), power.values().to_vec())?;
    for &lag in &recipe.lags {
        frame.add_real(columns::lag(lag), FeatureTag::KNOWN_REAL, Some("kW"), lag_values(power.values(), lag)?)?;
    }

    let offset = power.utc_offset_minutes();
    let (sin, cos): (Vec<f64>, Vec<f64>) = frame.index().iter().map(|&t| month_cyclic(t, offset)).unzip();
    frame.add_real(columns::MONTH_SIN, FeatureTag::KNOWN_REAL, None, sin)?;
    frame.add_real(columns::MONTH_COS, FeatureTag::KNOWN_REAL, None, cos)?;
    let seasons = (0..n)
        .map(|r| Some(Season::of_month(frame.local_date(r).month()).id()))
        .collect();
    frame.add_categorical(columns::SEASON, FeatureTag::KNOWN_CATEGORICAL, columns::SEASON, seasons)?;

    if let Some(a) = angles {
        check(columns::ZENITH, &a.zenith)?;
        check(columns::AZIMUTH, &a.azimuth)?;
        frame.add_real(columns::ZENITH, FeatureTag::KNOWN_REAL, Some("deg"), a.zenith.clone())?;
        frame.add_real(columns::AZIMUTH, FeatureTag::KNOWN_REAL, Some("deg"), a.azimuth.clone())?;
    }

    let weather = daily_weather(&frame, &met.ghi, &met.dhi);
    frame.add_real(columns::GHI, mode.real_tag(), Some("W/m2"), met.ghi.clone())?;
    frame.add_real(columns::DHI, mode.real_tag(), Some("W/m2"), met.dhi.clone())?;
    for (name, unit, values) in [
        (columns::TEMPERATURE, "degC", &met.temperature),
        (columns::RAINFALL, "mm", &met.rainfall),
        (columns::HUMIDITY, "%", &met.humidity),
    ] {
        if let Some(v) = values {
            check(name, v)?;
            frame.add_real(name, mode.real_tag(), Some(unit), v.clone())?;
        }
    }
    frame.add_categorical(columns::WEATHER, mode.categorical_tag(), columns::WEATHER, weather)?;

    frame.add_static_category(columns::MANUFACTURER, &plant.manufacturer)?;
    frame.add_static_category(columns::PV_TECHNOLOGY, &plant.pv_technology)?;
    frame.add_static_category(columns::ARRAY_STRUCTURE, &plant.array_structure)?;
    frame.add_static_real(columns::ARRAY_RATING, Some("kW"), plant.array_rating)?;
    frame.add_static_real(columns::INSTALL_YEAR, None, f64::from(plant.install_year))?;
    Ok(frame)
}

/// Builds features from the hourly frame produced by ingestion.
pub fn build_from_hourly(
    hourly: &FeatureFrame,
    plant: &PlantSpec,
    recipe: &FeatureRecipe,
) -> Result<FeatureFrame, FeatureError> {
    if !hourly.is_contiguous() {
        return Err(FeatureError::Misaligned("hourly frame has gaps".into()));
    }
    let power = hourly.series(columns::POWER)?;
    let column = |name: &str| hourly.real(name).map(<[f64]>::to_vec);
    let require = |name: &str| column(name).ok_or_else(|| FeatureError::UnknownColumn(name.to_owned()));
    let met = MetColumns {
        ghi: require(columns::GHI)?,
        dhi: require(columns::DHI)?,
        temperature: column(columns::TEMPERATURE),
        rainfall: column(columns::RAINFALL),
        humidity: column(columns::HUMIDITY),
    };
    let angles = match (column(columns::ZENITH), column(columns::AZIMUTH)) {
        (Some(zenith), Some(azimuth)) => Some(SolarAngles { zenith, azimuth }),
        _ => None,
    };
    build_frame(plant, &power, &met, angles.as_ref(), recipe)
}

/// Weather class of each row's local day. Days without any valid GHI
/// reading are missing; days with zero global irradiance are overcast.
fn daily_weather(frame: &FeatureFrame, ghi: &[f64], dhi: &[f64]) -> Vec<Option<u32>> {
    let mut out = vec![None; frame.len()];
    for rows in frame.day_groups().values() {
        let valid: Vec<usize> = rows.iter().copied().filter(|&r| !ghi[r].is_nan() && !dhi[r].is_nan()).collect();
        if valid.is_empty() {
            continue;
        }
        let g: Vec<f64> = valid.iter().map(|&r| ghi[r].max(0.0)).collect();
        let d: Vec<f64> = valid.iter().map(|&r| dhi[r].max(0.0)).collect();
        let class = clearness_index(&d, &g)
            .ok()
            .and_then(|k| classify_weather(k).ok())
            .unwrap_or(WeatherType::OvercastRainy);
        for &r in rows {
            out[r] = Some(class.id());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::test_support::ymd;

    fn plant() -> PlantSpec {
        PlantSpec::new("PV-01", "BPSolar", 5.0, "poly-Si", "Fixed", 2008).unwrap()
    }

    fn inputs(days: usize) -> (TimeSeries, MetColumns) {
        let n = days * 24;
        let power = TimeSeries::hourly(ymd(2019, 1, 1), (0..n).map(|i| (i % 24) as f64).collect(), "kW")
            .unwrap()
            .with_utc_offset(0);
        let ghi: Vec<f64> = (0..n).map(|i| if (6..18).contains(&(i % 24)) { 500.0 } else { 0.0 }).collect();
        let dhi: Vec<f64> = ghi.iter().enumerate().map(|(i, g)| if i < 24 { g * 0.1 } else { g * 0.6 }).collect();
        let met = MetColumns {
            ghi,
            dhi,
            temperature: Some(vec![25.0; n]),
            ..Default::default()
        };
        (power, met)
    }

    #[test]
    fn tags_follow_meteorology_mode() {
        let (power, met) = inputs(3);
        for mode in MeteorologyMode::ALL {
            let f = build_frame(&plant(), &power, &met, None, &FeatureRecipe::new(mode)).unwrap();
            let tag = |n: &str| f.column(n).unwrap().tag;
            assert_eq!(tag(columns::POWER), FeatureTag::UNKNOWN_REAL);
            assert_eq!(tag("power_lag_24"), FeatureTag::KNOWN_REAL);
            assert_eq!(tag(columns::MONTH_SIN), FeatureTag::KNOWN_REAL);
            assert_eq!(tag(columns::SEASON), FeatureTag::KNOWN_CATEGORICAL);
            let known = mode == MeteorologyMode::Available;
            assert_eq!(tag(columns::GHI).is_known(), known);
            assert_eq!(tag(columns::TEMPERATURE).is_known(), known);
            assert_eq!(tag(columns::WEATHER).is_known(), known);
            assert!(f.column(columns::HUMIDITY).is_none());
            assert_eq!(f.statics()[columns::MANUFACTURER].tag, FeatureTag::STATIC_CATEGORICAL);
            assert_eq!(f.statics()[columns::ARRAY_RATING].tag, FeatureTag::STATIC_REAL);
        }
    }

    #[test]
    fn weather_is_constant_per_day() {
        let (power, met) = inputs(3);
        let f = build_frame(&plant(), &power, &met, None, &FeatureRecipe::new(MeteorologyMode::Available)).unwrap();
        let (_, ids) = f.categorical(columns::WEATHER).unwrap();
        assert!(ids[..24].iter().all(|&i| i == Some(WeatherType::Sunny.id())));
        assert!(ids[24..].iter().all(|&i| i == Some(WeatherType::OvercastRainy.id())));
    }

    #[test]
    fn recipe_hash_tracks_contents() {
        let a = FeatureRecipe::new(MeteorologyMode::Available);
        let b = FeatureRecipe::new(MeteorologyMode::Unavailable);
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn misaligned_meteorology_is_rejected() {
        let (power, mut met) = inputs(2);
        met.ghi.pop();
        let err = build_frame(&plant(), &power, &met, None, &FeatureRecipe::new(MeteorologyMode::Available));
        assert!(matches!(err, Err(FeatureError::Misaligned(_))));
    }
}

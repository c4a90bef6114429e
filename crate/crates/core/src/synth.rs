//! Deterministic synthetic PV plant data with known weather classes.
//!
//! Each local day draws a weather class from a Markov chain, a cloud level
//! and a diffuse fraction inside the class's clearness-index band. Hourly
//! irradiance is a clear-sky bell curve whose length follows the season,
//! scaled by the cloud level and an AR(1) cloud noise. Power is the array
//! rating times normalised irradiance times a temperature efficiency.
//! Humidity and temperature in the evening lean toward the next day's
//! cloudiness, so past meteorology carries information about tomorrow.

use std::f64::consts::{PI, TAU};

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::WeatherType;
use crate::ingest::{Field, PlantSpec, RawRecord, RawRecordSet};
use crate::series::{self, TimeSeries};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("at least {min} days are required, got {got}")]
    TooFewDays { min: usize, got: usize },
    #[error("transition row {0} must be non-negative and sum to 1")]
    BadTransitionRow(usize),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

pub const MIN_DAYS: usize = 14;

/// Alice Springs local standard time, UTC+9:30.
pub const DEFAULT_UTC_OFFSET_MINUTES: i32 = 570;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_days: usize,
    pub start: NaiveDate,
    pub utc_offset_minutes: i32,
    /// Mean hours between sunrise and sunset.
    pub mean_day_length: f64,
    /// Seasonal swing of the day length around the mean, hours.
    pub day_length_amplitude: f64,
    /// Row `i` holds the probabilities of moving from class `i` to each
    /// class, in the order sunny, cloudy, rainy.
    pub transition: [[f64; 3]; 3],
    /// Standard deviation of the hourly cloud noise per class.
    pub cloud_noise: [f64; 3],
    /// Lag-one correlation of the hourly cloud noise.
    pub cloud_persistence: f64,
    /// Hours before midnight over which humidity and temperature move
    /// toward the next day's cloudiness, as ahead of a weather front.
    pub precursor_hours: usize,
    /// Clear-sky global irradiance at solar noon on the longest day, W/m².
    pub peak_ghi: f64,
    pub plant: PlantSpec,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_days: 120,
            start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            utc_offset_minutes: DEFAULT_UTC_OFFSET_MINUTES,
            mean_day_length: 11.75,
            day_length_amplitude: 1.75,
            transition: [[0.70, 0.20, 0.10], [0.45, 0.35, 0.20], [0.40, 0.35, 0.25]],
            cloud_noise: [0.02, 0.15, 0.20],
            cloud_persistence: 0.6,
            precursor_hours: 12,
            peak_ghi: 1050.0,
            plant: PlantSpec::new("PV-01", "BPSolar", 5.0, "poly-Si", "Fixed", 2008).expect("positive rating"),
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_days < MIN_DAYS {
            return Err(SynthError::TooFewDays {
                min: MIN_DAYS,
                got: self.n_days,
            });
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(SynthError::BadTransitionRow(i));
            }
        }
        if self.cloud_noise.iter().any(|&s| !(s >= 0.0)) {
            return Err(SynthError::InvalidParam("cloud noise scales must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.cloud_persistence) {
            return Err(SynthError::InvalidParam("cloud persistence must be in [0, 1)".into()));
        }
        if !(self.mean_day_length > 0.0)
            || !(self.day_length_amplitude >= 0.0)
            || self.mean_day_length + self.day_length_amplitude >= 24.0
            || self.day_length_amplitude >= self.mean_day_length
        {
            return Err(SynthError::InvalidParam("day length must stay within (0, 24) hours".into()));
        }
        if self.precursor_hours > 24 {
            return Err(SynthError::InvalidParam("precursor must fit within one day".into()));
        }
        if !(self.peak_ghi > 0.0) {
            return Err(SynthError::InvalidParam("peak irradiance must be positive".into()));
        }
        Ok(())
    }

    /// A config whose chain never leaves the sunny class.
    pub fn all_sunny(mut self) -> Self {
        self.transition = [[1.0, 0.0, 0.0]; 3];
        self
    }
}

/// Generated hourly series, all of length `24 * n_days`, starting at local
/// midnight of the first day.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub plant: PlantSpec,
    pub utc_offset_minutes: i32,
    pub timestamps: Vec<DateTime<Utc>>,
    /// kW
    pub power: Vec<f64>,
    pub ghi: Vec<f64>,
    pub dhi: Vec<f64>,
    pub temperature: Vec<f64>,
    pub humidity: Vec<f64>,
    pub rainfall: Vec<f64>,
    pub zenith: Vec<f64>,
    pub azimuth: Vec<f64>,
    /// Generating class and diffuse fraction of each day.
    pub days: Vec<(NaiveDate, WeatherType, f64)>,
}

/// Bands of the daily cloud level and diffuse fraction for each class.
fn class_bands(class: WeatherType) -> ((f64, f64), (f64, f64)) {
    match class {
        WeatherType::Sunny => ((0.95, 1.0), (0.06, 0.13)),
        WeatherType::PartiallyCloudy => ((0.45, 0.75), (0.18, 0.42)),
        WeatherType::OvercastRainy => ((0.2, 0.4), (0.5, 0.85)),
    }
}

/// Lowest hourly clearness factor; keeps daytime power above the level the
/// ingest screening treats as missing generation.
const MIN_CLOUD_FACTOR: f64 = 0.15;

/// Day-of-year phase with the southern-hemisphere summer solstice at zero.
fn season_phase(date: NaiveDate) -> f64 {
    TAU * (date.ordinal() as f64 - 355.0) / 365.25
}

fn day_length(cfg: &SynthConfig, date: NaiveDate) -> f64 {
    cfg.mean_day_length + cfg.day_length_amplitude * season_phase(date).cos()
}

/// Clear-sky irradiance at local hour `t` and the solar elevation in
/// degrees (negative at night).
fn clear_sky(cfg: &SynthConfig, date: NaiveDate, t: f64) -> (f64, f64) {
    let length = day_length(cfg, date);
    let sunrise = 12.0 - length / 2.0;
    let phase = PI * (t - sunrise) / length;
    let max_elevation = 66.0 + 22.0 * season_phase(date).cos();
    let peak = cfg.peak_ghi * (max_elevation.to_radians().sin() / 88f64.to_radians().sin());
    if (0.0..=PI).contains(&phase) {
        (peak * phase.sin().powf(1.2), max_elevation * phase.sin())
    } else {
        let since_sunset = (t - sunrise - length).rem_euclid(24.0);
        (0.0, -max_elevation * (PI * since_sunset / (24.0 - length)).sin())
    }
}

fn azimuth(cfg: &SynthConfig, date: NaiveDate, t: f64) -> f64 {
    let length = day_length(cfg, date);
    let frac = (t - (12.0 - length / 2.0)) / length;
    (90.0 - 180.0 * frac).rem_euclid(360.0)
}

fn next_class(rng: &mut ChaCha8Rng, row: &[f64; 3]) -> WeatherType {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return WeatherType::ALL[i];
        }
    }
    WeatherType::ALL[row.iter().rposition(|&p| p > 0.0).unwrap_or(0)]
}

/// Irradiance and weather shared by all plants of a site.
#[derive(Debug, Clone)]
struct SkyTrack {
    ghi: Vec<f64>,
    dhi: Vec<f64>,
    temperature: Vec<f64>,
    humidity: Vec<f64>,
    rainfall: Vec<f64>,
    zenith: Vec<f64>,
    azimuth: Vec<f64>,
    days: Vec<(NaiveDate, WeatherType, f64)>,
}

fn sky(cfg: &SynthConfig) -> Result<SkyTrack, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let n = 24 * cfg.n_days;
    let mut track = SkyTrack {
        ghi: Vec::with_capacity(n),
        dhi: Vec::with_capacity(n),
        temperature: Vec::with_capacity(n),
        humidity: Vec::with_capacity(n),
        rainfall: Vec::with_capacity(n),
        zenith: Vec::with_capacity(n),
        azimuth: Vec::with_capacity(n),
        days: Vec::with_capacity(cfg.n_days),
    };
    let mut class = WeatherType::Sunny;
    let mut days = Vec::with_capacity(cfg.n_days);
    for d in 0..cfg.n_days {
        if d > 0 {
            class = next_class(&mut rng, &cfg.transition[class.id() as usize]);
        }
        let ((c_lo, c_hi), (k_lo, k_hi)) = class_bands(class);
        days.push((class, rng.random_range(c_lo..c_hi), rng.random_range(k_lo..k_hi)));
    }

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let rho = cfg.cloud_persistence;
    let lead = cfg.precursor_hours as f64;
    let mut noise = 0.0;
    for (d, &(class, level, kd)) in days.iter().enumerate() {
        let date = cfg.start + Duration::days(d as i64);
        let next_level = days.get(d + 1).map_or(level, |n| n.1);
        let sigma = cfg.cloud_noise[class.id() as usize];
        let wet = class == WeatherType::OvercastRainy;
        track.days.push((date, class, kd));
        for h in 0..24 {
            let t = h as f64;
            let (clear, elevation) = clear_sky(cfg, date, t);
            noise = rho * noise + (1.0 - rho * rho).sqrt() * sigma * unit.sample(&mut rng);
            let factor = (level * (1.0 + noise)).clamp(MIN_CLOUD_FACTOR, 1.0);
            let ghi = clear * factor;
            track.ghi.push(ghi);
            track.dhi.push(kd * ghi);
            // Moisture drifts toward the next day's cloudiness over the
            // last hours of the day.
            let w = if lead > 0.0 { ((t + lead - 24.0) / lead).clamp(0.0, 1.0) } else { 0.0 };
            let cloudiness = (1.0 - w) * (1.0 - level) + w * (1.0 - next_level);
            let diurnal = 7.0 * ((TAU * (t - 9.0) / 24.0).sin());
            track.temperature.push(21.0 + 8.0 * season_phase(date).cos() - 6.0 * cloudiness + diurnal);
            track.humidity.push((20.0 + 60.0 * cloudiness - 1.5 * diurnal).clamp(0.0, 100.0));
            track.rainfall.push(if wet { rng.random_range(0.0..1.5) } else { 0.0 });
            track.zenith.push(90.0 - elevation);
            track.azimuth.push(azimuth(cfg, date, t));
        }
    }
    Ok(track)
}

/// Temperature coefficient of power per degree above 25 °C cell
/// temperature, by technology.
fn temperature_coefficient(technology: &str) -> f64 {
    match technology {
        "Amorphoussilicon" => 0.002,
        "CIGS" => 0.0036,
        _ => 0.0042,
    }
}

fn plant_power(plant: &PlantSpec, track: &SkyTrack) -> Vec<f64> {
    let gamma = temperature_coefficient(&plant.pv_technology);
    track
        .ghi
        .iter()
        .zip(&track.temperature)
        .map(|(&g, &temp)| {
            if g <= 0.0 {
                return 0.0;
            }
            let cell = temp + 0.03 * g;
            let efficiency = 0.95 * (1.0 - gamma * (cell - 25.0));
            (plant.array_rating * g / 1000.0 * efficiency).clamp(0.0, plant.array_rating)
        })
        .collect()
}

fn timestamps(cfg: &SynthConfig) -> Vec<DateTime<Utc>> {
    let t0 = series::local_midnight(cfg.start, cfg.utc_offset_minutes);
    (0..24 * cfg.n_days).map(|i| t0 + Duration::hours(i as i64)).collect()
}

fn assemble(cfg: &SynthConfig, plant: &PlantSpec, track: &SkyTrack) -> SynthData {
    SynthData {
        plant: plant.clone(),
        utc_offset_minutes: cfg.utc_offset_minutes,
        timestamps: timestamps(cfg),
        power: plant_power(plant, track),
        ghi: track.ghi.clone(),
        dhi: track.dhi.clone(),
        temperature: track.temperature.clone(),
        humidity: track.humidity.clone(),
        rainfall: track.rainfall.clone(),
        zenith: track.zenith.clone(),
        azimuth: track.azimuth.clone(),
        days: track.days.clone(),
    }
}

/// Generates one plant. Fully determined by `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    let track = sky(cfg)?;
    Ok(assemble(cfg, &cfg.plant, &track))
}

/// Generates several plants of one site under the same sky.
pub fn generate_site(cfg: &SynthConfig, plants: &[PlantSpec]) -> Result<Vec<SynthData>, SynthError> {
    let track = sky(cfg)?;
    Ok(plants.iter().map(|p| assemble(cfg, p, &track)).collect())
}

impl SynthData {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn power_series(&self) -> TimeSeries {
        TimeSeries::new(self.timestamps[0], 3600, self.power.clone(), "kW")
            .expect("hourly series")
            .with_utc_offset(self.utc_offset_minutes)
    }

    pub fn weather_labels(&self) -> Vec<(NaiveDate, WeatherType)> {
        self.days.iter().map(|&(d, w, _)| (d, w)).collect()
    }

    fn column(&self, field: Field) -> &[f64] {
        match field {
            Field::Power => &self.power,
            Field::Ghi => &self.ghi,
            Field::Dhi => &self.dhi,
            Field::Temperature => &self.temperature,
            Field::Humidity => &self.humidity,
            Field::Rainfall => &self.rainfall,
            Field::Zenith => &self.zenith,
            Field::Azimuth => &self.azimuth,
        }
    }

    /// Records in the ingest layout, one per hour.
    pub fn records(&self) -> Vec<RawRecord> {
        (0..self.len())
            .map(|i| {
                let mut r = RawRecord::new(self.timestamps[i], self.plant.plant_id.clone());
                for field in Field::ALL {
                    r.set(field, self.column(field)[i]);
                }
                r
            })
            .collect()
    }
}

/// Record set of several generated plants, ready for
/// [`crate::ingest::write_csv`].
pub fn record_set(plants: &[SynthData]) -> RawRecordSet {
    let offset = plants.first().map_or(0, |p| p.utc_offset_minutes);
    let records = plants.iter().flat_map(SynthData::records).collect();
    RawRecordSet::new(records, Field::ALL.into_iter().collect(), offset).expect("generated records are ordered per plant")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{classify_weather, clearness_index};

    fn cfg() -> SynthConfig {
        SynthConfig {
            n_days: 60,
            rng_seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_series() {
        let a = generate(&cfg()).unwrap();
        let b = generate(&cfg()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { rng_seed: 8, ..cfg() }).unwrap();
        assert_ne!(a.power, c.power);
    }

    #[test]
    fn power_is_bounded_and_zero_at_night() {
        let d = generate(&cfg()).unwrap();
        let rating = d.plant.array_rating;
        assert!(d.power.iter().all(|&p| (0.0..=rating).contains(&p)));
        for (i, ts) in d.timestamps.iter().enumerate() {
            let hour = series::local_datetime(*ts, d.utc_offset_minutes).format("%H").to_string();
            if hour == "00" || hour == "03" || hour == "22" {
                assert_eq!(d.power[i], 0.0);
            }
        }
        assert!(d.power.iter().copied().fold(0.0, f64::max) > 0.6 * rating);
    }

    #[test]
    fn daily_diffuse_fraction_matches_class() {
        let d = generate(&cfg()).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for (k, &(_, class, _)) in d.days.iter().enumerate() {
            let rows = 24 * k..24 * (k + 1);
            let kd = clearness_index(&d.dhi[rows.clone()], &d.ghi[rows]).unwrap();
            assert_eq!(classify_weather(kd).unwrap(), class);
            seen.insert(class);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn all_sunny_days_classify_sunny() {
        let d = generate(&cfg().all_sunny()).unwrap();
        assert!(d.days.iter().all(|&(_, w, kd)| w == WeatherType::Sunny && kd <= 0.15));
    }

    #[test]
    fn noiseless_sunny_power_is_nearly_daily_periodic() {
        let mut c = cfg().all_sunny();
        c.cloud_noise = [0.0; 3];
        c.day_length_amplitude = 0.0;
        let d = generate(&c).unwrap();
        let rating = d.plant.array_rating;
        for i in 24..d.len() {
            assert!((d.power[i] - d.power[i - 24]).abs() < 0.1 * rating, "hour {i}");
        }
    }

    #[test]
    fn evening_humidity_leads_next_day_cloudiness() {
        let d = generate(&cfg()).unwrap();
        let evening: Vec<f64> = (0..59).map(|k| d.humidity[24 * k + 23]).collect();
        let next_ghi: Vec<f64> = (1..60).map(|k| d.ghi[24 * k..24 * (k + 1)].iter().sum()).collect();
        assert!(crate::scalar::correlation(&evening, &next_ghi) < -0.9);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(
            generate(&SynthConfig { n_days: 5, ..cfg() }),
            Err(SynthError::TooFewDays { .. })
        ));
        let mut c = cfg();
        c.transition[1] = [0.5, 0.5, 0.5];
        assert!(matches!(generate(&c), Err(SynthError::BadTransitionRow(1))));
    }

    #[test]
    fn records_follow_ingest_layout() {
        let plants = PlantSpec::dkasc_plants();
        let site = generate_site(&cfg(), &plants[..2]).unwrap();
        let set = record_set(&site);
        assert_eq!(set.plants(), vec!["PV-01".to_owned(), "PV-02".to_owned()]);
        assert_eq!(set.len(), 2 * 24 * 60);
        assert_eq!(site[0].ghi, site[1].ghi);
    }
}

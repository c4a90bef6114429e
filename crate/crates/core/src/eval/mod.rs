//! Capacity-normalised error metrics and the scoring harness: per plant, per
//! weather class, per meteorology mode and per site aggregation.

mod report;

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{columns, WeatherType};
use crate::forecast::ForecastResult;
use crate::frame::FeatureFrame;
use crate::series;

pub use report::{
    compare_methods, evaluate_grid, CellKey, CellScores, EvaluationReport, Metric, ReportEntry, ScoreTable,
};

/// Row label of the site total obtained by summing per-plant forecasts.
pub const SITE_INDIV: &str = "Site-Indiv";
/// Row label of the site total forecast directly from the summed series.
pub const SITE_SUM: &str = "Site-Sum";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("y_max must be positive, got {0}")]
    ZeroYMax(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("no finite (truth, forecast) pairs to score")]
    Empty,
    #[error("day {0} has no weather label")]
    UnlabeledDay(NaiveDate),
    #[error("inputs are not aligned: {0}")]
    Misaligned(String),
    #[error("incomplete grid, missing cells: {}", .0.join(", "))]
    IncompleteGrid(Vec<String>),
    #[error("duplicate grid cell {0}")]
    DuplicateCell(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Truth and point forecast of one scored series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationInput {
    pub plant_id: String,
    pub timestamps: Vec<DateTime<Utc>>,
    pub utc_offset_minutes: i32,
    /// kW
    pub y: Vec<f64>,
    /// kW
    pub y_hat: Vec<f64>,
    /// Maximum of the true series over the evaluation window, kW.
    pub y_max: f64,
    /// Weather class of each local day covered by `timestamps`.
    pub weather: BTreeMap<NaiveDate, WeatherType>,
}

impl EvaluationInput {
    /// `y_max` is taken from the finite values of `y`.
    pub fn new(
        plant_id: impl Into<String>,
        timestamps: Vec<DateTime<Utc>>,
        utc_offset_minutes: i32,
        y: Vec<f64>,
        y_hat: Vec<f64>,
    ) -> Result<Self, EvalError> {
        if y.len() != y_hat.len() || y.len() != timestamps.len() {
            return Err(EvalError::LengthMismatch(format!(
                "{} timestamps, {} truths, {} forecasts",
                timestamps.len(),
                y.len(),
                y_hat.len()
            )));
        }
        let y_max = y.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if !(y_max > 0.0) {
            return Err(EvalError::ZeroYMax(y_max.max(0.0)));
        }
        Ok(Self {
            plant_id: plant_id.into(),
            timestamps,
            utc_offset_minutes,
            y,
            y_hat,
            y_max,
            weather: BTreeMap::new(),
        })
    }

    pub fn with_weather(mut self, weather: BTreeMap<NaiveDate, WeatherType>) -> Self {
        self.weather = weather;
        self
    }

    pub fn with_y_max(mut self, y_max: f64) -> Result<Self, EvalError> {
        if !(y_max > 0.0) {
            return Err(EvalError::ZeroYMax(y_max));
        }
        self.y_max = y_max;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Scores the median tracks of day-ahead forecasts against the `power`
    /// column of `truth`. Weather labels come from the `weather` column.
    pub fn from_forecasts(
        plant_id: impl Into<String>,
        truth: &FeatureFrame,
        forecasts: &[(NaiveDate, ForecastResult)],
    ) -> Result<Self, EvalError> {
        let power = truth
            .real(columns::POWER)
            .ok_or_else(|| EvalError::InvalidInput("truth frame has no power column".into()))?;
        let mut timestamps = Vec::new();
        let mut y = Vec::new();
        let mut y_hat = Vec::new();
        for (_, f) in forecasts {
            for (ts, &p) in f.timestamps.iter().zip(f.point()) {
                let row = truth
                    .position(*ts)
                    .ok_or_else(|| EvalError::Misaligned(format!("forecast time {ts} not in the truth frame")))?;
                timestamps.push(*ts);
                y.push(power[row]);
                y_hat.push(p);
            }
        }
        let input = Self::new(plant_id, timestamps, truth.utc_offset_minutes(), y, y_hat)?;
        Ok(input.with_weather(daily_weather(truth)))
    }

    fn day(&self, i: usize) -> NaiveDate {
        series::local_date(self.timestamps[i], self.utc_offset_minutes)
    }

    /// Distinct local days in timestamp order.
    pub fn days(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> = (0..self.len()).map(|i| self.day(i)).collect();
        days.dedup();
        days
    }

    fn subset(&self, keep: impl Fn(NaiveDate) -> bool) -> (Vec<f64>, Vec<f64>) {
        (0..self.len())
            .filter(|&i| keep(self.day(i)))
            .map(|i| (self.y[i], self.y_hat[i]))
            .unzip()
    }
}

/// Weather class of each day of the frame's `weather` column; days without
/// a label are left out.
pub fn daily_weather(frame: &FeatureFrame) -> BTreeMap<NaiveDate, WeatherType> {
    let Some((_, ids)) = frame.categorical(columns::WEATHER) else {
        return BTreeMap::new();
    };
    frame
        .day_groups()
        .into_iter()
        .filter_map(|(day, rows)| {
            rows.iter()
                .find_map(|&r| ids[r])
                .and_then(WeatherType::from_id)
                .map(|w| (day, w))
        })
        .collect()
}

fn finite_pairs<'a>(y: &'a [f64], y_hat: &'a [f64]) -> impl Iterator<Item = (f64, f64)> + 'a {
    y.iter()
        .zip(y_hat)
        .map(|(&a, &b)| (a, b))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
}

fn check(y: &[f64], y_hat: &[f64], y_max: f64) -> Result<(), EvalError> {
    if y.len() != y_hat.len() {
        return Err(EvalError::LengthMismatch(format!("{} truths, {} forecasts", y.len(), y_hat.len())));
    }
    if !(y_max > 0.0) {
        return Err(EvalError::ZeroYMax(y_max));
    }
    Ok(())
}

/// `100 / (T y_max) * sum |y - y_hat|` over the pairs where both values are
/// finite.
pub fn nmae_values(y: &[f64], y_hat: &[f64], y_max: f64) -> Result<f64, EvalError> {
    check(y, y_hat, y_max)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in finite_pairs(y, y_hat) {
        sum += (a - b).abs();
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(100.0 * sum / (n as f64 * y_max))
}

/// `100 * sqrt(sum (y - y_hat)^2 / (T y_max^2))` over the pairs where both
/// values are finite.
pub fn nrmse_values(y: &[f64], y_hat: &[f64], y_max: f64) -> Result<f64, EvalError> {
    check(y, y_hat, y_max)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in finite_pairs(y, y_hat) {
        sum += (a - b) * (a - b);
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(100.0 * (sum / (n as f64 * y_max * y_max)).sqrt())
}

pub fn nmae(input: &EvaluationInput) -> Result<f64, EvalError> {
    nmae_values(&input.y, &input.y_hat, input.y_max)
}

pub fn nrmse(input: &EvaluationInput) -> Result<f64, EvalError> {
    nrmse_values(&input.y, &input.y_hat, input.y_max)
}

/// NMAE and NRMSE in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub nmae: f64,
    pub nrmse: f64,
}

impl Scores {
    pub fn of(input: &EvaluationInput) -> Result<Self, EvalError> {
        Ok(Self {
            nmae: nmae(input)?,
            nrmse: nrmse(input)?,
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Nmae => self.nmae,
            Metric::Nrmse => self.nrmse,
        }
    }
}

/// Overall scores and scores restricted to the hours of each weather class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherScores {
    pub overall: Scores,
    /// `None` for a class with no days in the evaluation window.
    pub by_class: BTreeMap<WeatherType, Option<Scores>>,
    /// Percentage of evaluated days in each class.
    pub shares: BTreeMap<WeatherType, f64>,
}

/// Scores every weather class with the global `y_max`, so class scores are
/// comparable with each other and with the overall score.
pub fn evaluate_by_weather(input: &EvaluationInput) -> Result<WeatherScores, EvalError> {
    let days = input.days();
    for day in &days {
        if !input.weather.contains_key(day) {
            return Err(EvalError::UnlabeledDay(*day));
        }
    }
    let overall = Scores::of(input)?;
    let mut by_class = BTreeMap::new();
    let mut shares = BTreeMap::new();
    for class in WeatherType::ALL {
        let count = days.iter().filter(|d| input.weather[d] == class).count();
        shares.insert(class, 100.0 * count as f64 / days.len().max(1) as f64);
        let scores = if count == 0 {
            None
        } else {
            let (y, y_hat) = input.subset(|d| input.weather[&d] == class);
            match (nmae_values(&y, &y_hat, input.y_max), nrmse_values(&y, &y_hat, input.y_max)) {
                (Ok(nmae), Ok(nrmse)) => Some(Scores { nmae, nrmse }),
                (Err(EvalError::Empty), _) | (_, Err(EvalError::Empty)) => None,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        };
        by_class.insert(class, scores);
    }
    Ok(WeatherScores {
        overall,
        by_class,
        shares,
    })
}

/// How a multi-plant site total is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum of per-plant forecasts.
    Indiv,
    /// Direct forecast of the summed site series.
    Sum,
}

impl Aggregation {
    pub fn label(self) -> &'static str {
        match self {
            Aggregation::Indiv => "indiv",
            Aggregation::Sum => "sum",
        }
    }

    pub fn site_label(self) -> &'static str {
        match self {
            Aggregation::Indiv => SITE_INDIV,
            Aggregation::Sum => SITE_SUM,
        }
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "indiv" | "site-indiv" => Ok(Aggregation::Indiv),
            "sum" | "site-sum" => Ok(Aggregation::Sum),
            other => Err(format!("unknown aggregation `{other}` (expected indiv or sum)")),
        }
    }
}

/// Site-level input from per-plant inputs. The truth is always the sum of
/// plant truths; the forecast is the sum of plant forecasts (`Indiv`) or
/// `site_forecast` (`Sum`). `y_max` is the site-level maximum and weather
/// labels come from the first plant.
pub fn site_aggregate(
    plants: &[EvaluationInput],
    mode: Aggregation,
    site_forecast: Option<&[f64]>,
) -> Result<EvaluationInput, EvalError> {
    let first = plants.first().ok_or_else(|| EvalError::InvalidInput("no plants to aggregate".into()))?;
    for p in &plants[1..] {
        if p.timestamps != first.timestamps {
            return Err(EvalError::Misaligned(format!(
                "plant {} timestamps differ from plant {}",
                p.plant_id, first.plant_id
            )));
        }
    }
    let n = first.len();
    let sum_of = |f: fn(&EvaluationInput) -> &[f64]| -> Vec<f64> {
        (0..n).map(|i| plants.iter().map(|p| f(p)[i]).sum()).collect()
    };
    let y = sum_of(|p| &p.y);
    let y_hat = match mode {
        Aggregation::Indiv => sum_of(|p| &p.y_hat),
        Aggregation::Sum => {
            let f = site_forecast
                .ok_or_else(|| EvalError::InvalidInput("site-sum scoring needs the direct site forecast".into()))?;
            if f.len() != n {
                return Err(EvalError::LengthMismatch(format!("{} site forecasts for {n} timestamps", f.len())));
            }
            f.to_vec()
        }
    };
    Ok(EvaluationInput::new(mode.site_label(), first.timestamps.clone(), first.utc_offset_minutes, y, y_hat)?
        .with_weather(first.weather.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use proptest::prelude::*;

    fn hours(n: usize) -> Vec<DateTime<Utc>> {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        (0..n).map(|i| t0 + Duration::hours(i as i64)).collect()
    }

    fn input(y: Vec<f64>, y_hat: Vec<f64>) -> EvaluationInput {
        EvaluationInput::new("PV-01", hours(y.len()), 0, y, y_hat).unwrap()
    }

    #[test]
    fn hand_computed_values() {
        let e = input(vec![0.0, 2.0, 4.0], vec![1.0, 3.0, 5.0]);
        assert_eq!(e.y_max, 4.0);
        assert!((nmae(&e).unwrap() - 25.0).abs() < 1e-12);
        assert!((nrmse(&e).unwrap() - 25.0).abs() < 1e-12);
        let perfect = input(vec![1.0, 2.0], vec![1.0, 2.0]);
        assert_eq!(nmae(&perfect).unwrap(), 0.0);
        assert_eq!(nrmse(&perfect).unwrap(), 0.0);
    }

    #[test]
    fn zero_y_max_is_rejected() {
        assert!(matches!(
            EvaluationInput::new("p", hours(2), 0, vec![0.0, 0.0], vec![1.0, 1.0]),
            Err(EvalError::ZeroYMax(_))
        ));
        assert!(matches!(nmae_values(&[1.0], &[1.0], 0.0), Err(EvalError::ZeroYMax(_))));
    }

    #[test]
    fn missing_pairs_are_skipped() {
        let v = nmae_values(&[1.0, f64::NAN, 3.0], &[2.0, 0.0, 3.0], 4.0).unwrap();
        assert!((v - 100.0 * 1.0 / (2.0 * 4.0)).abs() < 1e-12);
        assert!(matches!(nmae_values(&[f64::NAN], &[1.0], 1.0), Err(EvalError::Empty)));
    }

    fn labelled(days: &[WeatherType]) -> EvaluationInput {
        let n = days.len() * 24;
        let y: Vec<f64> = (0..n).map(|i| 1.0 + (i % 24) as f64).collect();
        let y_hat: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + (i / 24) as f64).collect();
        let mut e = input(y, y_hat);
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        e.weather = days.iter().enumerate().map(|(i, &w)| (d0 + Duration::days(i as i64), w)).collect();
        e
    }

    #[test]
    fn all_sunny_matches_overall() {
        let e = labelled(&[WeatherType::Sunny; 3]);
        let s = evaluate_by_weather(&e).unwrap();
        assert_eq!(s.by_class[&WeatherType::Sunny], Some(s.overall));
        assert_eq!(s.by_class[&WeatherType::OvercastRainy], None);
        assert_eq!(s.shares[&WeatherType::Sunny], 100.0);
    }

    #[test]
    fn classes_use_global_y_max() {
        let e = labelled(&[WeatherType::Sunny, WeatherType::OvercastRainy, WeatherType::OvercastRainy]);
        let s = evaluate_by_weather(&e).unwrap();
        let rainy = s.by_class[&WeatherType::OvercastRainy].unwrap();
        assert!((rainy.nmae - 100.0 * 1.5 / 24.0).abs() < 1e-12);
        assert_eq!(s.by_class[&WeatherType::Sunny].unwrap().nmae, 0.0);
        let total: f64 = s.shares.values().sum();
        assert!((total - 100.0).abs() < 0.01);
    }

    #[test]
    fn unlabeled_day_is_an_error() {
        let mut e = labelled(&[WeatherType::Sunny; 2]);
        e.weather.pop_last();
        assert!(matches!(evaluate_by_weather(&e), Err(EvalError::UnlabeledDay(_))));
    }

    #[test]
    fn opposite_errors_cancel_in_indiv() {
        let a = input(vec![1.0, 2.0, 3.0], vec![1.5, 2.5, 3.5]);
        let mut b = input(vec![2.0, 2.0, 2.0], vec![1.5, 1.5, 1.5]);
        b.plant_id = "PV-02".into();
        let site = site_aggregate(&[a.clone(), b.clone()], Aggregation::Indiv, None).unwrap();
        assert_eq!(nmae(&site).unwrap(), 0.0);
        assert!(nmae(&a).unwrap() > 0.0 && nmae(&b).unwrap() > 0.0);
        assert_eq!(site.y_max, 5.0);
        assert_eq!(site.plant_id, SITE_INDIV);
    }

    #[test]
    fn single_plant_aggregates_to_itself() {
        let a = input(vec![1.0, 2.0, 3.0], vec![1.5, 2.0, 2.0]);
        let indiv = site_aggregate(std::slice::from_ref(&a), Aggregation::Indiv, None).unwrap();
        let sum = site_aggregate(std::slice::from_ref(&a), Aggregation::Sum, Some(&a.y_hat)).unwrap();
        assert_eq!(nmae(&indiv).unwrap(), nmae(&a).unwrap());
        assert_eq!(nrmse(&sum).unwrap(), nrmse(&a).unwrap());
        assert!(site_aggregate(&[a], Aggregation::Sum, None).is_err());
    }

    #[test]
    fn misaligned_plants_are_rejected() {
        let a = input(vec![1.0, 2.0], vec![1.0, 2.0]);
        let mut b = a.clone();
        b.timestamps[1] += Duration::hours(1);
        assert!(matches!(site_aggregate(&[a, b], Aggregation::Indiv, None), Err(EvalError::Misaligned(_))));
    }

    proptest! {
        #[test]
        fn metrics_scale_and_permute(
            pairs in prop::collection::vec((0.0f64..10.0, -3.0f64..3.0), 1..40),
            c in 0.1f64..5.0,
            rot in 0usize..40,
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let y_max = 12.0;
            let f = |k: f64| -> Vec<f64> { y.iter().zip(&r).map(|(a, b)| a + k * b).collect() };
            let base_mae = nmae_values(&y, &f(1.0), y_max).unwrap();
            let base_rmse = nrmse_values(&y, &f(1.0), y_max).unwrap();
            prop_assert!((nmae_values(&y, &f(c), y_max).unwrap() - c * base_mae).abs() <= 1e-9 * (1.0 + base_mae));
            prop_assert!((nrmse_values(&y, &f(c), y_max).unwrap() - c * base_rmse).abs() <= 1e-9 * (1.0 + base_rmse));

            let mut ys = y.clone();
            let mut fs = f(1.0);
            let k = rot % ys.len();
            ys.rotate_left(k);
            fs.rotate_left(k);
            prop_assert!((nmae_values(&ys, &fs, y_max).unwrap() - base_mae).abs() < 1e-9);
            prop_assert!((nrmse_values(&ys, &fs, y_max).unwrap() - base_rmse).abs() < 1e-9);
        }

        #[test]
        fn constant_offset_gives_equal_metrics(y in prop::collection::vec(0.0f64..10.0, 1..30), d in 0.01f64..2.0) {
            let y_hat: Vec<f64> = y.iter().map(|v| v + d).collect();
            let a = nmae_values(&y, &y_hat, 10.0).unwrap();
            let b = nrmse_values(&y, &y_hat, 10.0).unwrap();
            prop_assert!((a - 10.0 * d).abs() < 1e-9);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}

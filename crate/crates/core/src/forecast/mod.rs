//! Day-ahead quantile forecasting: task geometry, the pinball loss, a
//! seasonal-naive baseline, a feedforward quantile network and the
//! decompose-forecast-recompose strategy.

mod layout;
mod mlp;
mod model;
mod strategy;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomp::DecompError;
use crate::features::{FeatureError, MeteorologyMode};
use crate::frame::{FeatureFrame, FrameError};
use crate::scalar::Real;
use crate::series::TimeSeries;

pub use layout::{day_origin, InputLayout, InputSource};
pub use mlp::{Layer, Mlp};
pub use model::{train_qnet, EpochLog, QuantileModel, TrainConfig, TrainingLog, MODEL_FORMAT_VERSION};
pub use strategy::{
    decompose_forecast_recompose, fill_gaps, fit_decomposed, forecast_days, ComponentModel, DecomposedForecaster,
    ForecastMethod,
};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("history too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("no complete training windows could be built")]
    NoWindows,
    #[error("training loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("context lacks required feature `{0}`")]
    MissingKnownFeatures(String),
    #[error("window at row {0} is not covered by contiguous context")]
    IncompleteContext(usize),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model was trained for feature recipe {expected}, got {found}")]
    RecipeMismatch { expected: String, found: String },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// What a model predicts: the raw power series or one decomposition
/// component of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Raw,
    Component(String),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Raw => f.write_str("raw"),
            Target::Component(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTask {
    /// Hours of history fed to the model.
    pub input_horizon: usize,
    /// Hours predicted in one pass.
    pub forecast_horizon: usize,
    pub quantiles: Vec<f64>,
    pub meteorology_mode: MeteorologyMode,
    pub target: Target,
}

impl ForecastTask {
    pub const DEFAULT_QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

    pub fn new(meteorology_mode: MeteorologyMode) -> Self {
        Self {
            input_horizon: 72,
            forecast_horizon: 24,
            quantiles: Self::DEFAULT_QUANTILES.to_vec(),
            meteorology_mode,
            target: Target::Raw,
        }
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidTask(m.to_owned()));
        if self.forecast_horizon == 0 {
            return bad("forecast horizon must be positive");
        }
        if self.input_horizon < self.forecast_horizon {
            return bad("input horizon must be at least the forecast horizon");
        }
        if self.quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return bad("quantiles must lie in (0, 1)");
        }
        if self.quantiles.windows(2).any(|w| w[1] <= w[0]) {
            return bad("quantiles must be strictly ascending");
        }
        if self.median_index().is_none() {
            return bad("quantiles must include 0.5");
        }
        Ok(())
    }

    pub fn median_index(&self) -> Option<usize> {
        self.quantiles.iter().position(|&q| q == 0.5)
    }
}

/// Quantile tracks over one forecast horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub timestamps: Vec<DateTime<Utc>>,
    pub quantiles: Vec<f64>,
    /// One track per quantile, each as long as `timestamps`.
    pub tracks: Vec<Vec<f64>>,
}

impl ForecastResult {
    pub fn new(timestamps: Vec<DateTime<Utc>>, quantiles: Vec<f64>, tracks: Vec<Vec<f64>>) -> Result<Self, ForecastError> {
        if tracks.len() != quantiles.len() || tracks.iter().any(|t| t.len() != timestamps.len()) {
            return Err(ForecastError::ShapeMismatch(format!(
                "{} tracks for {} quantiles over {} timestamps",
                tracks.len(),
                quantiles.len(),
                timestamps.len()
            )));
        }
        Ok(Self {
            timestamps,
            quantiles,
            tracks,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn track(&self, q: f64) -> Option<&[f64]> {
        self.quantiles.iter().position(|&x| x == q).map(|i| self.tracks[i].as_slice())
    }

    /// The median track.
    pub fn point(&self) -> &[f64] {
        self.track(0.5).unwrap_or_else(|| &self.tracks[self.tracks.len() / 2])
    }

    /// Sorts each point's quantile values ascending, then clips to
    /// `[0, array_rating]`.
    pub fn finalize(mut self, array_rating: f64) -> Self {
        let nq = self.tracks.len();
        let mut column = vec![0.0; nq];
        for i in 0..self.len() {
            for (q, c) in column.iter_mut().enumerate() {
                *c = self.tracks[q][i];
            }
            column.sort_by(f64::total_cmp);
            for (q, c) in column.iter().enumerate() {
                self.tracks[q][i] = c.clamp(0.0, array_rating);
            }
        }
        self
    }

    pub fn is_monotone(&self) -> bool {
        (0..self.len()).all(|i| self.tracks.windows(2).all(|w| w[0][i] <= w[1][i]))
    }
}

/// Pinball loss: mean over points of the sum over quantiles of
/// `max(q r, (q - 1) r)` with `r = y - y_hat`.
pub fn quantile_loss<T: Real>(y: &[T], y_hat: &[Vec<T>], quantiles: &[T]) -> Result<T, ForecastError> {
    if y_hat.len() != quantiles.len() || y_hat.iter().any(|t| t.len() != y.len()) {
        return Err(ForecastError::ShapeMismatch("one prediction track per quantile, each as long as y".into()));
    }
    if y.is_empty() {
        return Err(ForecastError::ShapeMismatch("empty target".into()));
    }
    let mut total = T::zero();
    for (track, &q) in y_hat.iter().zip(quantiles) {
        for (&yi, &pi) in y.iter().zip(track) {
            total = total + pinball(yi - pi, q);
        }
    }
    Ok(total / T::from_usize_lossy(y.len()))
}

pub(crate) fn pinball<T: Real>(r: T, q: T) -> T {
    (q * r).max((q - T::one()) * r)
}

/// Anything that emits a day-ahead forecast from a context frame. `origin`
/// is the row of the first forecast hour.
pub trait Forecaster {
    fn task(&self) -> &ForecastTask;
    fn forecast(&self, context: &FeatureFrame, origin: usize) -> Result<ForecastResult, ForecastError>;
}

/// Repeats the last `period` observations.
pub fn seasonal_naive(
    history: &TimeSeries,
    period: usize,
    horizon: usize,
    quantiles: &[f64],
) -> Result<ForecastResult, ForecastError> {
    let n = history.len();
    if period == 0 || n < period {
        return Err(ForecastError::TooShort { needed: period.max(1), got: n });
    }
    let track: Vec<f64> = (0..horizon).map(|i| history.values()[n - period + i % period]).collect();
    let timestamps = (0..horizon).map(|i| history.timestamp(n + i)).collect();
    ForecastResult::new(timestamps, quantiles.to_vec(), vec![track; quantiles.len()])
}

/// The seasonal-naive baseline as a [`Forecaster`] over a frame column.
#[derive(Debug, Clone)]
pub struct SeasonalNaive {
    pub task: ForecastTask,
    pub period: usize,
    pub column: String,
}

impl SeasonalNaive {
    pub fn new(task: ForecastTask) -> Self {
        Self {
            task,
            period: 24,
            column: crate::features::columns::POWER.to_owned(),
        }
    }
}

impl Forecaster for SeasonalNaive {
    fn task(&self) -> &ForecastTask {
        &self.task
    }

    fn forecast(&self, context: &FeatureFrame, origin: usize) -> Result<ForecastResult, ForecastError> {
        let values = context
            .real(&self.column)
            .ok_or_else(|| ForecastError::MissingKnownFeatures(self.column.clone()))?;
        let h = self.task.forecast_horizon;
        if origin < self.period || origin + h > context.len() {
            return Err(ForecastError::IncompleteContext(origin));
        }
        let track: Vec<f64> = (0..h).map(|i| values[origin - self.period + i % self.period]).collect();
        let timestamps = context.index()[origin..origin + h].to_vec();
        let nq = self.task.quantiles.len();
        ForecastResult::new(timestamps, self.task.quantiles.clone(), vec![track; nq])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::test_support::ymd;
    use proptest::prelude::*;

    #[test]
    fn loss_hand_values() {
        assert_eq!(quantile_loss(&[2.0], &[vec![1.0]], &[0.5]).unwrap(), 0.5);
        assert!((quantile_loss(&[2.0f64], &[vec![1.0]], &[0.9]).unwrap() - 0.9).abs() < 1e-15);
        assert!((quantile_loss(&[1.0f64], &[vec![2.0]], &[0.9]).unwrap() - 0.1).abs() < 1e-15);
        let y = [1.0, 2.0, 3.0];
        assert_eq!(quantile_loss(&y, &[y.to_vec(), y.to_vec()], &[0.1, 0.9]).unwrap(), 0.0);
        assert!(quantile_loss(&y, &[y.to_vec()], &[0.1, 0.9]).is_err());
    }

    #[test]
    fn task_validation() {
        let mut t = ForecastTask::new(MeteorologyMode::Available);
        assert!(t.validate().is_ok());
        t.quantiles = vec![0.1, 0.9];
        assert!(t.validate().is_err());
        t.quantiles = vec![0.5, 0.25];
        assert!(t.validate().is_err());
        let mut t = ForecastTask::new(MeteorologyMode::Available);
        t.input_horizon = 12;
        assert!(t.validate().is_err());
    }

    #[test]
    fn naive_repeats_last_period() {
        let values: Vec<f64> = (0..48).map(|i| (i % 24) as f64 + if i >= 24 { 100.0 } else { 0.0 }).collect();
        let h = TimeSeries::hourly(ymd(2020, 1, 1), values.clone(), "kW").unwrap();
        let f = seasonal_naive(&h, 24, 24, &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(f.point(), &values[24..]);
        assert_eq!(f.timestamps[0], ymd(2020, 1, 3));
        assert!(f.is_monotone());
        let c = TimeSeries::hourly(ymd(2020, 1, 1), vec![3.0; 30], "kW").unwrap();
        assert!(seasonal_naive(&c, 24, 24, &[0.5]).unwrap().point().iter().all(|&v| v == 3.0));
        assert!(matches!(seasonal_naive(&c, 48, 24, &[0.5]), Err(ForecastError::TooShort { .. })));
    }

    #[test]
    fn finalize_sorts_then_clips() {
        let ts = vec![ymd(2020, 1, 1), ymd(2020, 1, 2)];
        let f = ForecastResult::new(ts, vec![0.1, 0.5, 0.9], vec![vec![3.0, -1.0], vec![1.0, 9.0], vec![2.0, 4.0]])
            .unwrap()
            .finalize(5.0);
        assert_eq!(f.tracks, vec![vec![1.0, 0.0], vec![2.0, 4.0], vec![3.0, 5.0]]);
        assert!(f.is_monotone());
    }

    proptest! {
        #[test]
        fn median_loss_is_half_mae(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50)) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let mae = y.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
            let loss = quantile_loss(&y, &[p], &[0.5]).unwrap();
            prop_assert!((loss - 0.5 * mae).abs() <= 1e-12 * mae.max(1.0));
        }

        #[test]
        fn loss_is_nonnegative(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20), q in 0.01f64..0.99) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assert!(quantile_loss(&y, &[p], &[q]).unwrap() >= 0.0);
        }

        #[test]
        fn finalize_is_monotone_and_bounded(raw in prop::collection::vec(prop::collection::vec(-5.0f64..15.0, 6), 3)) {
            let ts = (0..6).map(|i| ymd(2020, 1, 1 + i)).collect();
            let f = ForecastResult::new(ts, vec![0.1, 0.5, 0.9], raw).unwrap().finalize(10.0);
            prop_assert!(f.is_monotone());
            prop_assert!(f.tracks.iter().flatten().all(|v| (0.0..=10.0).contains(v)));
        }
    }
}

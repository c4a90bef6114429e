//! Training, prediction and persistence of the feedforward quantile model.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layout::{day_origin, InputLayout};
use super::mlp::Mlp;
use super::{ForecastError, ForecastResult, ForecastTask, Forecaster};
use crate::features::{columns, ColumnScale, NormalizationParams};
use crate::frame::{FeatureFrame, StaticValue};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// L2 penalty added to every parameter gradient.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            batch_size: 8,
            max_epochs: 600,
            patience: 80,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.to_owned()));
        if self.patience >= self.max_epochs {
            return bad("patience must be below max epochs");
        }
        if self.batch_size == 0 || self.hidden.contains(&0) {
            return bad("batch size and layer widths must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning rate must be positive and weight decay non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_windows: usize,
    pub val_windows: usize,
}

/// A trained network plus everything needed to encode its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel {
    pub format_version: u32,
    pub task: ForecastTask,
    pub config: TrainConfig,
    pub recipe_hash: Option<String>,
    pub layout: InputLayout,
    pub input_normalization: NormalizationParams,
    pub target_scale: ColumnScale,
    pub network: Mlp<f64>,
}

struct Windows {
    x: Vec<f64>,
    y: Vec<f64>,
    count: usize,
}

fn build_windows(
    frame: &FeatureFrame,
    target: &[f64],
    days: &[NaiveDate],
    layout: &InputLayout,
    norm: &NormalizationParams,
    target_scale: &ColumnScale,
) -> Result<Windows, ForecastError> {
    let h = layout.forecast_horizon;
    let mut w = Windows {
        x: Vec::new(),
        y: Vec::new(),
        count: 0,
    };
    for &day in days {
        let Some(origin) = day_origin(frame, day) else { continue };
        if layout.check_window(frame, origin).is_err() {
            continue;
        }
        let y = &target[origin..origin + h];
        if y.iter().any(|v| !v.is_finite()) {
            continue;
        }
        layout.encode(frame, origin, norm, &mut w.x)?;
        w.y.extend(y.iter().map(|&v| target_scale.apply(v)));
        w.count += 1;
    }
    Ok(w)
}

/// Trains a quantile network on the windows whose forecast day is in
/// `train_days`, selecting the epoch with the lowest loss on `val_days`.
///
/// `target` is aligned with the rows of `frame`. Inputs come from `frame`
/// according to column tags; the history of each window may reach into
/// days of other splits. Min-max parameters are fitted on the rows of the
/// training days only.
pub fn train_qnet(
    frame: &FeatureFrame,
    target: &[f64],
    train_days: &[NaiveDate],
    val_days: &[NaiveDate],
    task: &ForecastTask,
    cfg: &TrainConfig,
) -> Result<(QuantileModel, TrainingLog), ForecastError> {
    task.validate()?;
    cfg.validate()?;
    if target.len() != frame.len() {
        return Err(ForecastError::ShapeMismatch("target must align with frame rows".into()));
    }
    let groups = frame.day_groups();
    let train_rows: Vec<usize> = train_days.iter().filter_map(|d| groups.get(d)).flatten().copied().collect();
    let norm = NormalizationParams::fit_lenient(frame, Some(&train_rows));
    let target_scale = ColumnScale::fit(train_rows.iter().map(|&r| target[r]));
    let layout = InputLayout::from_frame(frame, task);

    let train = build_windows(frame, target, train_days, &layout, &norm, &target_scale)?;
    let val = build_windows(frame, target, val_days, &layout, &norm, &target_scale)?;
    if train.count == 0 {
        return Err(ForecastError::NoWindows);
    }
    let width = layout.width();
    let h = task.forecast_horizon;
    let nq = task.quantiles.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut network = Mlp::new(width, &cfg.hidden, h * nq, &mut rng);
    init_output_bias(&mut network, &train.y, h, &task.quantiles);

    let mut log = TrainingLog {
        train_windows: train.count,
        val_windows: val.count,
        ..Default::default()
    };
    let mut adam = Adam::new(network.param_count(), cfg.learning_rate);
    let mut best = (f64::INFINITY, network.params(), 0);
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.count).collect();
    let mut xb = Vec::new();
    let mut yb = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(&train.x[i * width..(i + 1) * width]);
                yb.extend_from_slice(&train.y[i * h..(i + 1) * h]);
            }
            let (loss, mut grad) = network.loss_and_gradient(&xb, &yb, &task.quantiles);
            if !loss.is_finite() {
                return Err(ForecastError::DivergedLoss { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            if cfg.weight_decay > 0.0 {
                let params = network.params();
                for (g, p) in grad.iter_mut().zip(params) {
                    *g += cfg.weight_decay * p;
                }
            }
            adam.step(&mut network, &grad);
        }
        let train_loss = epoch_loss / train.count as f64;
        let val_loss = if val.count > 0 {
            network.loss(&val.x, &val.y, &task.quantiles)
        } else {
            network.loss(&train.x, &train.y, &task.quantiles)
        };
        if !val_loss.is_finite() {
            return Err(ForecastError::DivergedLoss { epoch });
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, network.params(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    network.set_params(&best.1);
    log.best_epoch = best.2;
    log::debug!(
        "trained {} on {} windows: best epoch {} (val loss {:.5})",
        task.target,
        train.count,
        best.2,
        best.0
    );
    Ok((
        QuantileModel {
            format_version: MODEL_FORMAT_VERSION,
            task: task.clone(),
            config: cfg.clone(),
            recipe_hash: None,
            layout,
            input_normalization: norm,
            target_scale,
            network,
        },
        log,
    ))
}

/// Starts each output at the empirical quantile of its horizon step.
fn init_output_bias(network: &mut Mlp<f64>, targets: &[f64], horizon: usize, quantiles: &[f64]) {
    let count = targets.len() / horizon;
    let last = network.layers.last_mut().expect("output layer");
    for step in 0..horizon {
        let mut values: Vec<f64> = (0..count).map(|i| targets[i * horizon + step]).collect();
        values.sort_by(f64::total_cmp);
        for (qi, &q) in quantiles.iter().enumerate() {
            let pos = ((values.len() - 1) as f64 * q).round() as usize;
            last.bias[step * quantiles.len() + qi] = values[pos];
        }
    }
}

struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, network: &mut Mlp<f64>, grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let (m, v, lr) = (&mut self.m, &mut self.v, self.lr);
        network.update(grad, |i, p, g| {
            m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g;
            v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
        });
    }
}

impl QuantileModel {
    /// Quantile tracks in target units, neither sorted nor clipped.
    pub fn predict_tracks(&self, context: &FeatureFrame, origin: usize) -> Result<Vec<Vec<f64>>, ForecastError> {
        let mut x = Vec::with_capacity(self.layout.width());
        self.layout.encode(context, origin, &self.input_normalization, &mut x)?;
        let out = self.network.forward(&x);
        let nq = self.task.quantiles.len();
        let h = self.task.forecast_horizon;
        Ok((0..nq)
            .map(|q| (0..h).map(|s| self.target_scale.invert(out[s * nq + q])).collect())
            .collect())
    }

    /// Forecast for the day starting at `origin`, sorted across quantiles and
    /// clipped to `[0, array_rating]`.
    pub fn predict(&self, context: &FeatureFrame, origin: usize, array_rating: f64) -> Result<ForecastResult, ForecastError> {
        let tracks = self.predict_tracks(context, origin)?;
        let h = self.task.forecast_horizon;
        let timestamps = context.index()[origin..origin + h].to_vec();
        Ok(ForecastResult::new(timestamps, self.task.quantiles.clone(), tracks)?.finalize(array_rating))
    }

    pub fn with_recipe_hash(mut self, hash: impl Into<String>) -> Self {
        self.recipe_hash = Some(hash.into());
        self
    }

    pub fn save(&self, path: &Path) -> Result<(), ForecastError> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    /// Loads a model, rejecting it when `expected_recipe` differs from the
    /// recipe it was trained with.
    pub fn load(path: &Path, expected_recipe: Option<&str>) -> Result<Self, ForecastError> {
        let model: QuantileModel = serde_json::from_slice(&fs::read(path)?)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ForecastError::UnsupportedVersion(model.format_version));
        }
        check_recipe(model.recipe_hash.as_deref(), expected_recipe)?;
        Ok(model)
    }
}

pub(crate) fn check_recipe(stored: Option<&str>, expected: Option<&str>) -> Result<(), ForecastError> {
    if let (Some(stored), Some(expected)) = (stored, expected) {
        if stored != expected {
            return Err(ForecastError::RecipeMismatch {
                expected: stored.to_owned(),
                found: expected.to_owned(),
            });
        }
    }
    Ok(())
}

/// Upper clipping bound: the frame's array rating, else unbounded.
pub(crate) fn rating_of(frame: &FeatureFrame) -> f64 {
    match frame.statics().get(columns::ARRAY_RATING).map(|f| &f.value) {
        Some(StaticValue::Real(r)) if *r > 0.0 => *r,
        _ => f64::INFINITY,
    }
}

impl Forecaster for QuantileModel {
    fn task(&self) -> &ForecastTask {
        &self.task
    }

    fn forecast(&self, context: &FeatureFrame, origin: usize) -> Result<ForecastResult, ForecastError> {
        self.predict(context, origin, rating_of(context))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::MeteorologyMode;
    use crate::frame::test_support::{hourly_frame, ymd};
    use crate::frame::FeatureTag;

    fn frame(days: usize, power: impl Fn(usize) -> f64) -> FeatureFrame {
        let mut f = hourly_frame(ymd(2020, 1, 1), 24 * days);
        let n = f.len();
        f.add_real("power", FeatureTag::UNKNOWN_REAL, Some("kW"), (0..n).map(&power).collect()).unwrap();
        let ghi: Vec<f64> = (0..n).map(|i| ((i % 24) as f64 - 12.0).abs()).collect();
        f.add_real("ghi", FeatureTag::UNKNOWN_REAL, None, ghi).unwrap();
        f.add_real("hour", FeatureTag::KNOWN_REAL, None, (0..n).map(|i| (i % 24) as f64).collect()).unwrap();
        f.add_static_real(columns::ARRAY_RATING, Some("kW"), 10.0).unwrap();
        f
    }

    fn days(f: &FeatureFrame) -> Vec<NaiveDate> {
        f.day_groups().keys().copied().collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden: vec![16],
            learning_rate: 1e-2,
            batch_size: 8,
            max_epochs: 60,
            patience: 10,
            ..Default::default()
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let f = frame(20, |_| 4.0);
        let d = days(&f);
        let target = f.real("power").unwrap().to_vec();
        let task = ForecastTask::new(MeteorologyMode::Available);
        let (model, log) = train_qnet(&f, &target, &d[3..15], &d[15..], &task, &small_config()).unwrap();
        let out = model.predict(&f, 24 * 18, 10.0).unwrap();
        for track in &out.tracks {
            assert!(track.iter().all(|v| (v - 4.0).abs() <= 0.04), "{track:?}");
        }
        assert_eq!(out.len(), 24);
        assert!(log.best_epoch >= 1);
    }

    #[test]
    fn training_is_deterministic() {
        let f = frame(20, |i| ((i % 24) as f64 / 3.0).sin().max(0.0) * 5.0);
        let d = days(&f);
        let target = f.real("power").unwrap().to_vec();
        let task = ForecastTask::new(MeteorologyMode::Available);
        let a = train_qnet(&f, &target, &d[3..15], &d[15..], &task, &small_config()).unwrap();
        let b = train_qnet(&f, &target, &d[3..15], &d[15..], &task, &small_config()).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.predict(&f, 24 * 18, 10.0).unwrap(), b.0.predict(&f, 24 * 18, 10.0).unwrap());
    }

    #[test]
    fn early_stopping_halts_training() {
        // Targets are noise unrelated to inputs, so validation loss stalls.
        let f = frame(30, |i| ((i * 7919) % 13) as f64 / 3.0);
        let d = days(&f);
        let target = f.real("power").unwrap().to_vec();
        let task = ForecastTask::new(MeteorologyMode::Available);
        let cfg = TrainConfig {
            max_epochs: 150,
            patience: 3,
            learning_rate: 5e-2,
            ..small_config()
        };
        let (_, log) = train_qnet(&f, &target, &d[3..20], &d[20..], &task, &cfg).unwrap();
        assert!(log.stopped_early);
        assert!(log.epochs.len() < 150);
        assert_eq!(log.epochs.len(), log.best_epoch + 3);
    }

    #[test]
    fn unknown_columns_never_read_the_future() {
        let f = frame(20, |i| ((i % 24) as f64 / 4.0).sin().max(0.0) * 5.0);
        let d = days(&f);
        let target = f.real("power").unwrap().to_vec();
        let task = ForecastTask::new(MeteorologyMode::Unavailable);
        let (model, _) = train_qnet(&f, &target, &d[3..15], &d[15..], &task, &small_config()).unwrap();
        let origin = 24 * 18;
        let mut altered = f.clone();
        let mut ghi = f.real("ghi").unwrap().to_vec();
        let mut power = f.real("power").unwrap().to_vec();
        for r in origin..origin + 24 {
            ghi[r] = 1e6;
            power[r] = f64::NAN;
        }
        altered.replace_real("ghi", ghi).unwrap();
        altered.replace_real("power", power).unwrap();
        assert_eq!(model.forecast(&f, origin).unwrap(), model.forecast(&altered, origin).unwrap());
    }

    #[test]
    fn missing_known_feature_is_reported() {
        let f = frame(20, |_| 1.0);
        let d = days(&f);
        let target = f.real("power").unwrap().to_vec();
        let task = ForecastTask::new(MeteorologyMode::Available);
        let (model, _) = train_qnet(&f, &target, &d[3..15], &d[15..], &task, &small_config()).unwrap();
        let mut g = hourly_frame(ymd(2020, 1, 1), 24 * 20);
        g.add_real("power", FeatureTag::UNKNOWN_REAL, None, vec![1.0; 480]).unwrap();
        g.add_real("ghi", FeatureTag::UNKNOWN_REAL, None, vec![1.0; 480]).unwrap();
        g.add_static_real(columns::ARRAY_RATING, None, 10.0).unwrap();
        assert!(matches!(model.forecast(&g, 24 * 5), Err(ForecastError::MissingKnownFeatures(c)) if c == "hour"));
    }

    #[test]
    fn no_windows_is_an_error() {
        let f = frame(5, |_| 1.0);
        let target = f.real("power").unwrap().to_vec();
        let task = ForecastTask::new(MeteorologyMode::Available);
        let only_first: Vec<NaiveDate> = days(&f)[..2].to_vec();
        let r = train_qnet(&f, &target, &only_first, &[], &task, &small_config());
        assert!(matches!(r, Err(ForecastError::NoWindows)));
    }

    #[test]
    fn persistence_round_trip_and_recipe_check() {
        let f = frame(12, |i| (i % 24) as f64 / 5.0);
        let d = days(&f);
        let target = f.real("power").unwrap().to_vec();
        let task = ForecastTask::new(MeteorologyMode::Available);
        let cfg = TrainConfig {
            max_epochs: 5,
            patience: 2,
            ..small_config()
        };
        let (model, _) = train_qnet(&f, &target, &d[3..9], &d[9..], &task, &cfg).unwrap();
        let model = model.with_recipe_hash("abc");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = QuantileModel::load(&path, Some("abc")).unwrap();
        assert_eq!(back, model);
        assert!(matches!(QuantileModel::load(&path, Some("xyz")), Err(ForecastError::RecipeMismatch { .. })));
    }
}

//! Decompose the training-period target, fit one model per component and
//! forecast by summing the component forecasts.

use std::fmt;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layout::day_origin;
use super::model::{check_recipe, rating_of};
use super::{train_qnet, ForecastError, ForecastResult, ForecastTask, Forecaster, QuantileModel, Target, TrainConfig, TrainingLog};
use crate::decomp::{decompose, DecompConfig, DecompError, Method};
use crate::features::columns;
use crate::frame::{FeatureFrame, SplitPlan};

/// Raw forecasting or forecasting through a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    Raw,
    Decomposed(DecompConfig),
}

impl ForecastMethod {
    /// Parses `raw` or a decomposition method name; `periods` applies to
    /// STL and MSTL.
    pub fn from_name(name: &str, periods: &[usize]) -> Result<Self, String> {
        Self::with_params(name, periods, &DecompConfig::default())
    }

    /// Like [`ForecastMethod::from_name`], taking every other decomposition
    /// parameter from `template`.
    pub fn with_params(name: &str, periods: &[usize], template: &DecompConfig) -> Result<Self, String> {
        if name.eq_ignore_ascii_case("raw") {
            return Ok(ForecastMethod::Raw);
        }
        let method: Method = name.parse()?;
        let mut cfg = DecompConfig {
            method,
            ..template.clone()
        };
        if !periods.is_empty() {
            cfg.periods = periods.to_vec();
        }
        Ok(ForecastMethod::Decomposed(cfg))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ForecastMethod::Raw => "raw",
            ForecastMethod::Decomposed(cfg) => cfg.method.label(),
        }
    }
}

impl fmt::Display for ForecastMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub component: String,
    pub model: QuantileModel,
    pub log: TrainingLog,
}

/// Component models whose quantile tracks are summed, then sorted and
/// clipped. Summing quantiles across components is an approximation; the
/// median track is the point forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedForecaster {
    pub method: ForecastMethod,
    pub task: ForecastTask,
    pub components: Vec<ComponentModel>,
}

/// Linear interpolation over missing values; leading and trailing gaps take
/// the nearest present value, an all-missing series becomes zeros.
pub fn fill_gaps(values: &[f64]) -> Vec<f64> {
    let present: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (present.first(), present.last()) else {
        return vec![0.0; values.len()];
    };
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            out[i] = values[a] + t * (values[b] - values[a]);
        }
    }
    out
}

/// Maximal runs of consecutive rows outside the test days.
fn non_test_segments(frame: &FeatureFrame, plan: &SplitPlan) -> Vec<std::ops::Range<usize>> {
    let mut segments = Vec::new();
    let mut start = None;
    for row in 0..=frame.len() {
        let inside = row < frame.len() && !plan.test_days.contains(&frame.local_date(row));
        match (inside, start) {
            (true, None) => start = Some(row),
            (false, Some(s)) => {
                segments.push(s..row);
                start = None;
            }
            _ => {}
        }
    }
    segments
}

/// Component targets over the rows outside the test days. Each contiguous
/// non-test segment is gap-filled and decomposed on its own, so no
/// component value depends on test data. Test rows, rows whose power is
/// missing and segments too short to decompose are left missing, so no
/// window uses them as targets. A component absent from a segment (EMD may
/// extract fewer IMFs) is missing there.
fn component_targets(frame: &FeatureFrame, plan: &SplitPlan, method: &ForecastMethod) -> Result<Vec<(String, Vec<f64>)>, ForecastError> {
    let power = frame
        .real(columns::POWER)
        .ok_or_else(|| ForecastError::MissingKnownFeatures(columns::POWER.to_owned()))?;
    let cfg = match method {
        ForecastMethod::Raw => return Ok(vec![("raw".to_owned(), power.to_vec())]),
        ForecastMethod::Decomposed(cfg) => cfg,
    };
    let mut targets: Vec<(String, Vec<f64>)> = Vec::new();
    for segment in non_test_segments(frame, plan) {
        let span = fill_gaps(&power[segment.clone()]);
        let result = match decompose(&span, cfg) {
            Ok(r) => r,
            Err(DecompError::TooShort { .. }) => {
                log::warn!("segment of {} rows is too short to decompose; left out", segment.len());
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for c in result.components {
            let at = match targets.iter().position(|(name, _)| *name == c.name) {
                Some(i) => i,
                None => {
                    targets.push((c.name.clone(), vec![f64::NAN; frame.len()]));
                    targets.len() - 1
                }
            };
            let values = &mut targets[at].1;
            for (offset, v) in c.values.into_iter().enumerate() {
                let row = segment.start + offset;
                if power[row].is_finite() {
                    values[row] = v;
                }
            }
        }
    }
    if targets.is_empty() {
        return Err(ForecastError::NoWindows);
    }
    Ok(targets)
}

/// Fits one model per component. Component `i` trains with seed
/// `cfg.seed + i`, so the raw method reproduces a single direct model.
pub fn fit_decomposed(
    frame: &FeatureFrame,
    plan: &SplitPlan,
    method: &ForecastMethod,
    task: &ForecastTask,
    cfg: &TrainConfig,
) -> Result<DecomposedForecaster, ForecastError> {
    if !frame.is_contiguous() {
        return Err(ForecastError::ShapeMismatch("training frame must be contiguous".into()));
    }
    let targets = component_targets(frame, plan, method)?;
    let train_days: Vec<NaiveDate> = plan.train_days.iter().copied().collect();
    let val_days: Vec<NaiveDate> = plan.val_days.iter().copied().collect();
    let components = targets
        .into_par_iter()
        .enumerate()
        .map(|(i, (name, target))| {
            let mut component_task = task.clone();
            if !matches!(method, ForecastMethod::Raw) {
                component_task.target = Target::Component(name.clone());
            }
            let component_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            let (model, log) = train_qnet(frame, &target, &train_days, &val_days, &component_task, &component_cfg)?;
            Ok(ComponentModel {
                component: name,
                model,
                log,
            })
        })
        .collect::<Result<Vec<_>, ForecastError>>()?;
    Ok(DecomposedForecaster {
        method: method.clone(),
        task: task.clone(),
        components,
    })
}

impl DecomposedForecaster {
    pub fn with_recipe_hash(mut self, hash: &str) -> Self {
        for c in &mut self.components {
            c.model.recipe_hash = Some(hash.to_owned());
        }
        self
    }

    pub fn recipe_hash(&self) -> Option<&str> {
        self.components.first().and_then(|c| c.model.recipe_hash.as_deref())
    }

    /// Sum of the component tracks before sorting and clipping.
    pub fn summed_tracks(&self, context: &FeatureFrame, origin: usize) -> Result<Vec<Vec<f64>>, ForecastError> {
        let nq = self.task.quantiles.len();
        let mut sum = vec![vec![0.0; self.task.forecast_horizon]; nq];
        for c in &self.components {
            let tracks = c.model.predict_tracks(context, origin)?;
            for (s, t) in sum.iter_mut().zip(tracks) {
                for (a, b) in s.iter_mut().zip(t) {
                    *a += b;
                }
            }
        }
        Ok(sum)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForecastError> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path, expected_recipe: Option<&str>) -> Result<Self, ForecastError> {
        let f: DecomposedForecaster = serde_json::from_slice(&fs::read(path)?)?;
        for c in &f.components {
            if c.model.format_version != super::MODEL_FORMAT_VERSION {
                return Err(ForecastError::UnsupportedVersion(c.model.format_version));
            }
            check_recipe(c.model.recipe_hash.as_deref(), expected_recipe)?;
        }
        Ok(f)
    }
}

impl Forecaster for DecomposedForecaster {
    fn task(&self) -> &ForecastTask {
        &self.task
    }

    fn forecast(&self, context: &FeatureFrame, origin: usize) -> Result<ForecastResult, ForecastError> {
        let tracks = self.summed_tracks(context, origin)?;
        let h = self.task.forecast_horizon;
        if origin + h > context.len() {
            return Err(ForecastError::IncompleteContext(origin));
        }
        let timestamps = context.index()[origin..origin + h].to_vec();
        Ok(ForecastResult::new(timestamps, self.task.quantiles.clone(), tracks)?.finalize(rating_of(context)))
    }
}

/// Forecasts each listed day starting at its local midnight. Days without a
/// complete context window are skipped.
pub fn forecast_days(
    forecaster: &(dyn Forecaster + Sync),
    context: &FeatureFrame,
    days: &[NaiveDate],
) -> Result<Vec<(NaiveDate, ForecastResult)>, ForecastError> {
    let mut out = Vec::with_capacity(days.len());
    for &day in days {
        let Some(origin) = day_origin(context, day) else {
            log::warn!("no context row at local midnight of {day}; skipped");
            continue;
        };
        match forecaster.forecast(context, origin) {
            Ok(f) => out.push((day, f)),
            Err(ForecastError::IncompleteContext(_)) => log::warn!("incomplete context window for {day}; skipped"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Fits component models on the plan's training and validation days and
/// forecasts every test day.
pub fn decompose_forecast_recompose(
    frame: &FeatureFrame,
    plan: &SplitPlan,
    method: &ForecastMethod,
    task: &ForecastTask,
    cfg: &TrainConfig,
) -> Result<(DecomposedForecaster, Vec<(NaiveDate, ForecastResult)>), ForecastError> {
    let forecaster = fit_decomposed(frame, plan, method, task, cfg)?;
    let test_days: Vec<NaiveDate> = plan.test_days.iter().copied().collect();
    let forecasts = forecast_days(&forecaster, frame, &test_days)?;
    Ok((forecaster, forecasts))
}

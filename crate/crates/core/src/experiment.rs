//! Runs the full comparison grid: plants (and site totals) x methods x
//! meteorology modes, from hourly plant frames to an evaluation report.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomp::DecompConfig;
use crate::eval::{
    compare_methods, evaluate_grid, site_aggregate, Aggregation, CellKey, EvalError, EvaluationInput,
    EvaluationReport,
};
use crate::features::{build_from_hourly, columns, FeatureError, FeatureRecipe, MeteorologyMode};
use crate::forecast::{
    decompose_forecast_recompose, forecast_days, ForecastError, ForecastMethod, ForecastResult, ForecastTask,
    SeasonalNaive, TrainConfig, TrainingLog,
};
use crate::frame::{plan_split, FeatureFrame, FrameError, SplitPlan, SplitSpec};
use crate::ingest::PlantSpec;

/// Method label of the seasonal-naive baseline.
pub const SEASONAL_NAIVE: &str = "seasonal_naive";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    InvalidConfig(String),
    #[error("{cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: ForecastError,
    },
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Hourly raw frame of one plant, as produced by
/// [`crate::ingest::hourly_frame`].
#[derive(Debug, Clone)]
pub struct PlantData {
    pub spec: PlantSpec,
    pub hourly: FeatureFrame,
}

/// What to run. Every field has a default, so a config file only needs the
/// fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Any of `raw`, `stl`, `mstl`, `emd`, `eemd`, `vmd`, `vmd-eemd`, and
    /// `seasonal_naive` for the baseline.
    pub methods: Vec<String>,
    /// Seasonal periods of STL and MSTL, in hours.
    pub periods: Vec<usize>,
    pub modes: Vec<MeteorologyMode>,
    /// Site totals added when more than one plant is given.
    pub aggregations: Vec<Aggregation>,
    pub input_horizon: usize,
    pub forecast_horizon: usize,
    pub quantiles: Vec<f64>,
    /// Parameters of the decomposition methods; `periods` above wins.
    pub decomp: DecompConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            methods: vec!["raw".into(), "mstl".into()],
            periods: vec![24],
            modes: MeteorologyMode::ALL.to_vec(),
            aggregations: vec![Aggregation::Indiv, Aggregation::Sum],
            input_horizon: 72,
            forecast_horizon: 24,
            quantiles: ForecastTask::DEFAULT_QUANTILES.to_vec(),
            decomp: DecompConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
        }
    }
}

impl GridSpec {
    pub fn task(&self, mode: MeteorologyMode) -> ForecastTask {
        ForecastTask {
            input_horizon: self.input_horizon,
            forecast_horizon: self.forecast_horizon,
            quantiles: self.quantiles.clone(),
            ..ForecastTask::new(mode)
        }
    }

    /// Parsed methods; `None` marks the seasonal-naive baseline.
    pub fn parsed_methods(&self) -> Result<Vec<(String, Option<ForecastMethod>)>, ExperimentError> {
        self.methods
            .iter()
            .map(|name| {
                if name == SEASONAL_NAIVE {
                    return Ok((name.clone(), None));
                }
                let m = ForecastMethod::with_params(name, &self.periods, &self.decomp).map_err(ExperimentError::InvalidConfig)?;
                Ok((m.label().to_owned(), Some(m)))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.methods.is_empty() || self.modes.is_empty() {
            return Err(ExperimentError::InvalidConfig("methods and modes must be non-empty".into()));
        }
        let labels: Vec<String> = self.parsed_methods()?.into_iter().map(|(l, _)| l).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(ExperimentError::InvalidConfig(format!("method {l} listed twice")));
            }
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(m) {
                return Err(ExperimentError::InvalidConfig(format!("mode {} listed twice", m.label())));
            }
        }
        self.task(MeteorologyMode::Available).validate()?;
        self.train.validate()?;
        Ok(())
    }
}

/// Forecasts and training logs of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub key: CellKey,
    pub forecasts: Vec<(NaiveDate, ForecastResult)>,
    /// Per component; empty for the baseline.
    pub logs: Vec<(String, TrainingLog)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvaluationReport,
    pub runs: Vec<CellRun>,
}

/// A series that gets its own models: a plant or the summed site.
struct Unit {
    label: String,
    frames: BTreeMap<MeteorologyMode, (FeatureFrame, SplitPlan)>,
}

/// Sum of the plants' hourly power with the first plant's meteorology. The
/// site rating is the sum of ratings.
pub fn site_hourly(plants: &[PlantData]) -> Result<PlantData, ExperimentError> {
    let first = plants
        .first()
        .ok_or_else(|| ExperimentError::InvalidConfig("no plants".into()))?;
    let mut power = vec![0.0; first.hourly.len()];
    for p in plants {
        if p.hourly.index() != first.hourly.index() {
            return Err(ExperimentError::InvalidConfig(format!(
                "plant {} is not aligned with plant {}",
                p.spec.plant_id, first.spec.plant_id
            )));
        }
        let values = p
            .hourly
            .real(columns::POWER)
            .ok_or_else(|| FeatureError::UnknownColumn(columns::POWER.into()))?;
        for (s, v) in power.iter_mut().zip(values) {
            *s += v;
        }
    }
    let mut hourly = first.hourly.clone();
    hourly.replace_real(columns::POWER, power)?;
    let spec = PlantSpec {
        plant_id: crate::eval::SITE_SUM.to_owned(),
        manufacturer: "site".into(),
        array_rating: plants.iter().map(|p| p.spec.array_rating).sum(),
        pv_technology: "mixed".into(),
        array_structure: first.spec.array_structure.clone(),
        install_year: plants.iter().map(|p| p.spec.install_year).min().unwrap_or(first.spec.install_year),
    };
    Ok(PlantData { spec, hourly })
}

fn unit(data: &PlantData, grid: &GridSpec, seed: u64) -> Result<Unit, ExperimentError> {
    let mut frames = BTreeMap::new();
    for &mode in &grid.modes {
        let frame = build_from_hourly(&data.hourly, &data.spec, &FeatureRecipe::new(mode))?;
        let plan = plan_split(&frame, &grid.split.with_seed(seed))?;
        frames.insert(mode, (frame, plan));
    }
    Ok(Unit {
        label: data.spec.plant_id.clone(),
        frames,
    })
}

fn run_cell(
    unit: &Unit,
    mode: MeteorologyMode,
    label: &str,
    method: Option<&ForecastMethod>,
    grid: &GridSpec,
    seed: u64,
) -> Result<(CellRun, EvaluationInput), ExperimentError> {
    let (frame, plan) = &unit.frames[&mode];
    let task = grid.task(mode);
    let key = CellKey::new(unit.label.clone(), label, mode);
    let wrap = |source: ForecastError| ExperimentError::Cell {
        cell: key.to_string(),
        source,
    };
    let test_days: Vec<NaiveDate> = plan.test_days.iter().copied().collect();
    let (forecasts, logs) = match method {
        None => {
            let naive = SeasonalNaive::new(task);
            (forecast_days(&naive, frame, &test_days).map_err(wrap)?, Vec::new())
        }
        Some(m) => {
            let cfg = TrainConfig {
                seed,
                ..grid.train.clone()
            };
            let (fc, forecasts) = decompose_forecast_recompose(frame, plan, m, &task, &cfg).map_err(wrap)?;
            let logs = fc.components.into_iter().map(|c| (c.component, c.log)).collect();
            (forecasts, logs)
        }
    };
    let input = EvaluationInput::from_forecasts(unit.label.clone(), frame, &forecasts)?;
    Ok((CellRun { key, forecasts, logs }, input))
}

/// Runs every cell of the grid and scores it. Cells run in parallel; the
/// outcome does not depend on the number of worker threads.
pub fn run_experiment(plants: &[PlantData], grid: &GridSpec, seed: u64) -> Result<ExperimentOutcome, ExperimentError> {
    grid.validate()?;
    if plants.is_empty() {
        return Err(ExperimentError::InvalidConfig("no plants".into()));
    }
    let methods = grid.parsed_methods()?;
    let with_site = plants.len() > 1;
    let mut data: Vec<PlantData> = plants.to_vec();
    if with_site && grid.aggregations.contains(&Aggregation::Sum) {
        data.push(site_hourly(plants)?);
    }
    let units = data
        .par_iter()
        .map(|d| unit(d, grid, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut jobs: Vec<(usize, MeteorologyMode, usize)> = Vec::new();
    for u in 0..units.len() {
        for &mode in &grid.modes {
            jobs.extend((0..methods.len()).map(|m| (u, mode, m)));
        }
    }
    let results = jobs
        .par_iter()
        .map(|&(u, mode, m)| run_cell(&units[u], mode, &methods[m].0, methods[m].1.as_ref(), grid, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut runs = Vec::with_capacity(results.len());
    let mut inputs: Vec<(CellKey, EvaluationInput)> = Vec::new();
    for (run, input) in results {
        inputs.push((run.key.clone(), input));
        runs.push(run);
    }

    let mut rows: Vec<String> = plants.iter().map(|p| p.spec.plant_id.clone()).collect();
    if with_site {
        let plant_count = plants.len();
        let mut site_inputs = Vec::new();
        for &mode in &grid.modes {
            for (label, _) in &methods {
                let per_plant: Vec<EvaluationInput> = inputs[..]
                    .iter()
                    .filter(|(k, _)| k.mode == mode && &k.method == label)
                    .take(plant_count)
                    .map(|(_, i)| i.clone())
                    .collect();
                if grid.aggregations.contains(&Aggregation::Indiv) {
                    let key = CellKey::new(Aggregation::Indiv.site_label(), label.clone(), mode);
                    site_inputs.push((key, site_aggregate(&per_plant, Aggregation::Indiv, None)?));
                }
                if grid.aggregations.contains(&Aggregation::Sum) {
                    let key = CellKey::new(Aggregation::Sum.site_label(), label.clone(), mode);
                    let pos = inputs.iter().position(|(k, _)| k == &key).expect("site cell was run");
                    let direct = inputs.remove(pos).1;
                    site_inputs.push((key, site_aggregate(&per_plant, Aggregation::Sum, Some(&direct.y_hat))?));
                }
            }
        }
        inputs.extend(site_inputs);
        for a in [Aggregation::Indiv, Aggregation::Sum] {
            if grid.aggregations.contains(&a) {
                rows.push(a.site_label().to_owned());
            }
        }
    }

    let labels: Vec<String> = methods.iter().map(|(l, _)| l.clone()).collect();
    let cells = evaluate_grid(inputs)?;
    let report = compare_methods(cells, &rows, &labels, &grid.modes)?;
    Ok(ExperimentOutcome { report, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::hourly_frame;
    use crate::synth::{generate_site, record_set, SynthConfig};
    use chrono::NaiveDate;

    fn plants(n: usize, days: usize) -> Vec<PlantData> {
        let cfg = SynthConfig {
            n_days: days,
            rng_seed: 3,
            ..Default::default()
        };
        let specs = PlantSpec::dkasc_plants()[..n].to_vec();
        let site = generate_site(&cfg, &specs).unwrap();
        let set = record_set(&site);
        specs
            .into_iter()
            .map(|spec| {
                let (hourly, ..) = hourly_frame(&set, &spec).unwrap();
                PlantData { spec, hourly }
            })
            .collect()
    }

    fn grid(days_before_test: i64) -> GridSpec {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap() + chrono::Duration::days(days_before_test);
        GridSpec {
            methods: vec!["raw".into(), SEASONAL_NAIVE.into()],
            train: TrainConfig {
                hidden: vec![8],
                max_epochs: 3,
                patience: 1,
                ..Default::default()
            },
            split: SplitSpec::default().with_test_period(crate::frame::TestPeriod {
                start,
                end: start + chrono::Duration::days(365),
            }),
            ..Default::default()
        }
    }

    #[test]
    fn single_plant_grid_has_one_row_per_method_and_mode() {
        let out = run_experiment(&plants(1, 20), &grid(15), 1).unwrap();
        assert_eq!(out.report.plants, vec!["PV-01".to_owned()]);
        assert_eq!(out.report.cells.len(), 4);
        assert_eq!(out.runs.len(), 4);
        assert!(out.runs.iter().all(|r| r.forecasts.len() == 5));
    }

    #[test]
    fn two_plants_add_site_rows() {
        let out = run_experiment(&plants(2, 20), &grid(15), 1).unwrap();
        assert_eq!(
            out.report.plants,
            vec!["PV-01".to_owned(), "PV-02".to_owned(), "Site-Indiv".to_owned(), "Site-Sum".to_owned()]
        );
        assert_eq!(out.report.cells.len(), 16);
    }

    #[test]
    fn reruns_are_identical() {
        let a = run_experiment(&plants(1, 20), &grid(15), 4).unwrap();
        let b = run_experiment(&plants(1, 20), &grid(15), 4).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn bad_method_is_a_config_error() {
        let mut g = grid(15);
        g.methods = vec!["wavelet".into()];
        assert!(matches!(run_experiment(&plants(1, 20), &g, 0), Err(ExperimentError::InvalidConfig(_))));
    }
}

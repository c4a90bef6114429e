//! The subcommands. Each reads its inputs, writes artifacts under `--out`
//! and finishes with a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use pvcast::decomp::{decompose, DecompConfig, Method};
use pvcast::eval::{
    compare_methods, evaluate_grid, site_aggregate, Aggregation, CellKey, EvaluationInput, SITE_SUM,
};
use pvcast::experiment::{run_experiment, site_hourly, PlantData, SEASONAL_NAIVE};
use pvcast::features::{build_from_hourly, columns, FeatureRecipe, MeteorologyMode, WeatherType};
use pvcast::forecast::{
    fill_gaps, fit_decomposed, forecast_days, DecomposedForecaster, ForecastMethod, ForecastResult, ForecastTask,
    Forecaster, SeasonalNaive,
};
use pvcast::frame::{io as frame_io, plan_split, SplitPlan};
use pvcast::ingest::{self, hourly_frame, CleaningLog, ParseOptions, PlantSpec, ScreenLog};
use pvcast::synth::{generate_site, record_set};
use pvcast::FeatureFrame;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Overrides};
use crate::error::CliError;
use crate::manifest::Manifest;

pub const DATASET_FILE: &str = "dataset.json";
const HOURLY_DIR: &str = "hourly";
const RECIPE_FILE: &str = "recipe.json";
const MODEL_FILE: &str = "model.json";
const BASELINE_FILE: &str = "baseline.json";
const SPLIT_FILE: &str = "split.json";
const TRAINING_FILE: &str = "training.json";
const CELL_FILE: &str = "cell.json";
const FORECASTS_FILE: &str = "forecasts.csv";

/// Everything a command needs besides its name.
pub struct Context {
    pub config: Config,
    pub config_path: Option<PathBuf>,
    pub flags: Overrides,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub args: Vec<String>,
}

impl Context {
    fn data(&self) -> Result<&Path, CliError> {
        let data = self
            .data
            .as_deref()
            .ok_or_else(|| CliError::Config("--data is required".into()))?;
        if !data.is_dir() {
            return Err(CliError::Data(format!("{} is not a directory", data.display())));
        }
        Ok(data)
    }

    /// The output directory, which must not overlap the input.
    fn out(&self) -> Result<&Path, CliError> {
        let out = self
            .out
            .as_deref()
            .ok_or_else(|| CliError::Config("--out is required".into()))?;
        if let (Some(data), Ok(o)) = (self.data.as_deref(), absolute(out)) {
            if let Ok(d) = data.canonicalize() {
                if o.starts_with(&d) || d.starts_with(&o) {
                    return Err(CliError::Config("--out must not overlap --data".into()));
                }
            }
        }
        fs::create_dir_all(out)?;
        Ok(out)
    }

    fn manifest(&self, command: &str) -> Result<Manifest, CliError> {
        let mut m = Manifest::new(command, self.args.clone(), &self.config);
        if let Some(p) = &self.config_path {
            m.add_input(p)?;
        }
        Ok(m)
    }
}

/// Canonical form of a path that may not exist yet.
fn absolute(path: &Path) -> std::io::Result<PathBuf> {
    if let Ok(p) = path.canonicalize() {
        return Ok(p);
    }
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    Ok(absolute(parent)?.join(path.file_name().unwrap_or_default()))
}

/// Plants present in a data directory and the offset of its timestamps.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Dataset {
    utc_offset_minutes: i32,
    plants: Vec<PlantSpec>,
}

impl Dataset {
    fn read(dir: &Path) -> Result<Option<Self>, CliError> {
        let path = dir.join(DATASET_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }

    fn require(dir: &Path, producer: &str) -> Result<Self, CliError> {
        Self::read(dir)?.ok_or_else(|| {
            CliError::Data(format!("{} has no {DATASET_FILE}; expected the output of `{producer}`", dir.display()))
        })
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join(DATASET_FILE), self)
    }

    /// Plants listed in `wanted`, or all when it is empty. The site total
    /// always stays.
    fn select(&self, wanted: &[String]) -> Result<Vec<PlantSpec>, CliError> {
        if let Some(w) = wanted.iter().find(|w| !self.plants.iter().any(|p| &p.plant_id == *w)) {
            return Err(CliError::Data(format!("plant {w} is not in the data")));
        }
        Ok(self
            .plants
            .iter()
            .filter(|p| wanted.is_empty() || wanted.contains(&p.plant_id) || p.plant_id == SITE_SUM)
            .cloned()
            .collect())
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn sub_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Serialize)]
struct CleaningReport<'a> {
    cleaning: &'a CleaningLog,
    screening: &'a ScreenLog,
}

struct Ingested {
    data: PlantData,
    cleaning: CleaningLog,
    screening: ScreenLog,
}

/// Parses every CSV file directly inside `dir` into hourly plant frames.
fn ingest_dir(dir: &Path, cfg: &Config) -> Result<(i32, Vec<Ingested>), CliError> {
    let dataset = Dataset::read(dir)?;
    let offset = dataset.as_ref().map_or(cfg.utc_offset_minutes, |d| d.utc_offset_minutes);
    let specs = dataset.map_or_else(|| cfg.plant_specs.clone(), |d| d.plants);
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")));
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no CSV files in {}", dir.display())));
    }
    let opts = ParseOptions {
        default_plant: cfg.plants.first().cloned().unwrap_or_else(|| ParseOptions::default().default_plant),
        utc_offset_minutes: offset,
    };
    let mut out: Vec<Ingested> = Vec::new();
    for file in &files {
        let set = ingest::parse_csv(file, &cfg.schema, &opts).map_err(|e| CliError::from(e).context(file.display()))?;
        for id in set.plants() {
            if !cfg.plants.is_empty() && !cfg.plants.contains(&id) {
                continue;
            }
            if out.iter().any(|p| p.data.spec.plant_id == id) {
                return Err(CliError::Data(format!("plant {id} appears in more than one file")));
            }
            let spec = specs
                .iter()
                .find(|s| s.plant_id == id)
                .cloned()
                .ok_or_else(|| CliError::Data(format!("no plant properties for {id}; add them to plant_specs")))?;
            let (hourly, cleaning, screening) = hourly_frame(&set, &spec).map_err(|e| CliError::from(e).context(&id))?;
            log::info!(
                "{id}: {} hours, {} values clamped, {} filled, {} hours screened",
                hourly.len(),
                cleaning.total_clamped(),
                cleaning.total_filled(),
                screening.flagged.len()
            );
            out.push(Ingested {
                data: PlantData { spec, hourly },
                cleaning,
                screening,
            });
        }
    }
    if let Some(missing) = cfg.plants.iter().find(|w| !out.iter().any(|p| &p.data.spec.plant_id == *w)) {
        return Err(CliError::Data(format!("plant {missing} not found in {}", dir.display())));
    }
    Ok((offset, out))
}

/// Hourly frames from an `ingest` output, or from raw CSV files.
fn load_plants(dir: &Path, cfg: &Config) -> Result<(i32, Vec<PlantData>), CliError> {
    match Dataset::read(dir)? {
        Some(ds) if ds.plants.iter().all(|p| dir.join(&p.plant_id).join(HOURLY_DIR).is_dir()) => {
            let plants = ds
                .select(&cfg.plants)?
                .into_iter()
                .filter(|p| p.plant_id != SITE_SUM)
                .map(|spec| {
                    let hourly = frame_io::load(&dir.join(&spec.plant_id).join(HOURLY_DIR))?;
                    Ok(PlantData { spec, hourly })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok((ds.utc_offset_minutes, plants))
        }
        _ => {
            let (offset, ingested) = ingest_dir(dir, cfg)?;
            Ok((offset, ingested.into_iter().map(|i| i.data).collect()))
        }
    }
}

/// Plants generated from the synth config: the configured plant, or the
/// plants named in `plants` sharing one sky.
fn synth_plants(cfg: &Config) -> Result<Vec<PlantSpec>, CliError> {
    if cfg.plants.is_empty() {
        return Ok(vec![cfg.synth.plant.clone()]);
    }
    cfg.plants
        .iter()
        .map(|id| {
            cfg.plant_spec(id)
                .cloned()
                .ok_or_else(|| CliError::Config(format!("no plant properties for {id}; add them to plant_specs")))
        })
        .collect()
}

/// Generator's weather class and diffuse fraction of one day.
#[derive(Serialize)]
struct DayLabel {
    date: NaiveDate,
    weather: WeatherType,
    kd: f64,
}

pub fn synth(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let out = ctx.out()?;
    let specs = synth_plants(cfg)?;
    let site = generate_site(&cfg.synth, &specs)?;
    ingest::write_csv(&record_set(&site), BufWriter::new(fs::File::create(out.join("records.csv"))?))?;

    // Kept out of CSV so `ingest` does not mistake it for plant records.
    let days: Vec<DayLabel> = site[0]
        .days
        .iter()
        .map(|&(date, weather, kd)| DayLabel { date, weather, kd })
        .collect();
    write_json(&out.join("days.json"), &days)?;

    Dataset {
        utc_offset_minutes: cfg.synth.utc_offset_minutes,
        plants: specs,
    }
    .write(out)?;
    log::info!("generated {} days for {} plant(s)", cfg.synth.n_days, site.len());
    ctx.manifest("synth")?.write(out)
}

pub fn ingest(ctx: &Context) -> Result<(), CliError> {
    let data = ctx.data()?;
    let out = ctx.out()?;
    let (offset, plants) = ingest_dir(data, &ctx.config)?;
    for p in &plants {
        let dir = out.join(&p.data.spec.plant_id);
        frame_io::save(&p.data.hourly, &dir.join(HOURLY_DIR))?;
        write_json(
            &dir.join("cleaning.json"),
            &CleaningReport {
                cleaning: &p.cleaning,
                screening: &p.screening,
            },
        )?;
    }
    Dataset {
        utc_offset_minutes: offset,
        plants: plants.iter().map(|p| p.data.spec.clone()).collect(),
    }
    .write(out)?;
    let mut m = ctx.manifest("ingest")?;
    m.add_input(data)?;
    m.write(out)
}

#[derive(Serialize, Deserialize)]
struct RecipeFile {
    recipe: FeatureRecipe,
    hash: String,
}

pub fn features(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let data = ctx.data()?;
    let out = ctx.out()?;
    let (offset, mut units) = load_plants(data, cfg)?;
    if units.len() > 1 && cfg.grid.aggregations.contains(&Aggregation::Sum) {
        units.push(site_hourly(&units)?);
    }
    let jobs: Vec<(&PlantData, MeteorologyMode)> =
        units.iter().flat_map(|u| cfg.grid.modes.iter().map(move |&m| (u, m))).collect();
    jobs.par_iter().try_for_each(|&(unit, mode)| -> Result<(), CliError> {
        let recipe = FeatureRecipe::new(mode);
        let frame = build_from_hourly(&unit.hourly, &unit.spec, &recipe)
            .map_err(|e| CliError::from(e).context(&unit.spec.plant_id))?;
        let dir = out.join(&unit.spec.plant_id).join(mode.label());
        frame_io::save(&frame, &dir)?;
        let hash = recipe.hash();
        write_json(&dir.join(RECIPE_FILE), &RecipeFile { recipe, hash })
    })?;
    Dataset {
        utc_offset_minutes: offset,
        plants: units.iter().map(|u| u.spec.clone()).collect(),
    }
    .write(out)?;
    let mut m = ctx.manifest("features")?;
    m.add_input(data)?;
    m.write(out)
}

/// Decomposition settings of the `decompose` command: `--method` when
/// given, else the configured decomposition.
fn decomposition_config(ctx: &Context) -> Result<DecompConfig, CliError> {
    let cfg = &ctx.config;
    let mut d = cfg.grid.decomp.clone();
    if let Some(name) = &ctx.flags.method {
        d.method = name.parse::<Method>().map_err(CliError::Config)?;
    }
    if !cfg.grid.periods.is_empty() {
        d.periods = cfg.grid.periods.clone();
    }
    Ok(d)
}

pub fn decompose_cmd(ctx: &Context) -> Result<(), CliError> {
    let data = ctx.data()?;
    let out = ctx.out()?;
    let dcfg = decomposition_config(ctx)?;
    let (_, plants) = load_plants(data, &ctx.config)?;
    plants.par_iter().try_for_each(|p| -> Result<(), CliError> {
        let id = &p.spec.plant_id;
        let power = p
            .hourly
            .real(columns::POWER)
            .ok_or_else(|| CliError::Data(format!("{id}: no power column")))?;
        let filled = fill_gaps(power);
        let gaps = power.iter().filter(|v| !v.is_finite()).count();
        if gaps > 0 {
            log::warn!("{id}: {gaps} missing power values interpolated before decomposing");
        }
        let result = decompose(&filled, &dcfg).map_err(|e| CliError::from(e).context(id))?;
        let dir = out.join(id);
        fs::create_dir_all(&dir)?;
        let mut w = BufWriter::new(fs::File::create(dir.join("components.csv"))?);
        result.write_csv(&mut w).map_err(CliError::from)?;
        w.flush()?;
        let mut meta = result.metadata(&dcfg, &filled);
        meta["plant"] = serde_json::json!(id);
        meta["start"] = serde_json::json!(p.hourly.index().first().map(|t| frame_io::format_timestamp(*t)));
        meta["resolution_secs"] = serde_json::json!(p.hourly.resolution_secs());
        meta["interpolated_values"] = serde_json::json!(gaps);
        write_json(&dir.join("metadata.json"), &meta)?;
        log::info!("{id}: {} components", result.names().len());
        Ok(())
    })?;
    let mut m = ctx.manifest("decompose")?;
    m.add_input(data)?;
    m.write(out)
}

/// Trained seasonal-naive baseline; nothing is fitted beyond the period.
#[derive(Serialize, Deserialize)]
struct Baseline {
    task: ForecastTask,
    period: usize,
}

#[derive(Serialize, Deserialize)]
struct TrainingSource {
    features: PathBuf,
}

fn load_feature_frame(features: &Path, unit: &str, mode: MeteorologyMode) -> Result<(FeatureFrame, String), CliError> {
    let dir = features.join(unit).join(mode.label());
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "no {} features for {unit}; run `features` with that mode",
            mode.label()
        )));
    }
    let recipe: RecipeFile = read_json(&dir.join(RECIPE_FILE))?;
    Ok((frame_io::load(&dir)?, recipe.hash))
}

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let data = ctx.data()?;
    let out = ctx.out()?;
    let mut cfg = ctx.config.clone();
    let units = Dataset::require(data, "features")?.select(&cfg.plants)?;
    let methods = cfg.grid.parsed_methods()?;

    let mut frames: BTreeMap<(String, MeteorologyMode), (FeatureFrame, String)> = BTreeMap::new();
    for u in &units {
        for &mode in &cfg.grid.modes {
            frames.insert((u.plant_id.clone(), mode), load_feature_frame(data, &u.plant_id, mode)?);
        }
    }
    let first = frames.values().next().ok_or_else(|| CliError::Data("no plants to train".into()))?;
    cfg.grid.split.test_period = cfg.test_period(&first.0)?;
    cfg.explicit_test_period = true;

    let mut jobs = Vec::new();
    for key in frames.keys() {
        for m in &methods {
            jobs.push((key.clone(), m));
        }
    }
    jobs.par_iter().try_for_each(|((unit, mode), (label, method))| -> Result<(), CliError> {
        let key = CellKey::new(unit.clone(), label.clone(), *mode);
        let (frame, hash) = &frames[&(unit.clone(), *mode)];
        let plan = plan_split(frame, &cfg.grid.split)?;
        let task = cfg.grid.task(*mode);
        let dir = out.join(unit).join(label).join(mode.label());
        fs::create_dir_all(&dir)?;
        write_json(&dir.join(SPLIT_FILE), &plan)?;
        match method {
            None => write_json(&dir.join(BASELINE_FILE), &Baseline { task, period: 24 }),
            Some(m) => {
                let fc = fit_decomposed(frame, &plan, m, &task, &cfg.grid.train)
                    .map_err(|e| CliError::from(e).context(&key))?
                    .with_recipe_hash(hash);
                fc.save(&dir.join(MODEL_FILE))?;
                let logs: Vec<_> = fc.components.iter().map(|c| (&c.component, &c.log)).collect();
                write_json(&dir.join("training_log.json"), &logs)?;
                log::info!("{key}: trained {} component model(s)", fc.components.len());
                Ok(())
            }
        }
    })?;
    write_json(
        &out.join(TRAINING_FILE),
        &TrainingSource {
            features: data.canonicalize()?,
        },
    )?;
    Dataset {
        utc_offset_minutes: Dataset::require(data, "features")?.utc_offset_minutes,
        plants: units,
    }
    .write(out)?;
    let mut m = Manifest::new("train", ctx.args.clone(), &cfg);
    if let Some(p) = &ctx.config_path {
        m.add_input(p)?;
    }
    m.add_input(data)?;
    m.write(out)
}

/// A trained cell found under a model directory.
struct ModelCell {
    key: CellKey,
    dir: PathBuf,
}

/// Cells below `root` laid out as `unit/method/mode`, restricted by the
/// command-line filters.
fn discover_cells(root: &Path, marker: &[&str], flags: &Overrides) -> Result<Vec<ModelCell>, CliError> {
    let mut cells = Vec::new();
    for unit in sub_dirs(root)? {
        for method in sub_dirs(&unit)? {
            for mode_dir in sub_dirs(&method)? {
                if !marker.iter().any(|m| mode_dir.join(m).is_file()) {
                    continue;
                }
                let Ok(mode) = file_name(&mode_dir).parse::<MeteorologyMode>() else {
                    continue;
                };
                let key = CellKey::new(file_name(&unit), file_name(&method), mode);
                let keep = flags.plants.as_ref().is_none_or(|p| p.contains(&key.plant) || key.plant == SITE_SUM)
                    && flags.method.as_ref().is_none_or(|m| method_label(m) == key.method)
                    && flags.mode.is_none_or(|m| m == mode);
                if keep {
                    cells.push(ModelCell { key, dir: mode_dir });
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(CliError::Data(format!("no matching cells under {}", root.display())));
    }
    Ok(cells)
}

fn method_label(name: &str) -> String {
    if name == SEASONAL_NAIVE {
        return name.to_owned();
    }
    ForecastMethod::from_name(name, &[]).map_or_else(|_| name.to_owned(), |m| m.label().to_owned())
}

/// Per-cell facts written next to a forecast file.
#[derive(Serialize, Deserialize)]
struct CellInfo {
    plant: String,
    method: String,
    mode: MeteorologyMode,
    utc_offset_minutes: i32,
    quantiles: Vec<f64>,
    weather: BTreeMap<NaiveDate, WeatherType>,
}

fn write_forecasts(path: &Path, input: &EvaluationInput, forecasts: &[(NaiveDate, ForecastResult)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let quantiles = forecasts.first().map(|(_, f)| f.quantiles.clone()).unwrap_or_default();
    let mut header = vec!["timestamp".to_owned(), "date".to_owned(), "actual".to_owned()];
    header.extend(quantiles.iter().map(|q| format!("q{q}")));
    w.write_record(&header)?;
    let mut i = 0;
    for (date, f) in forecasts {
        for t in 0..f.len() {
            let mut row = vec![
                frame_io::format_timestamp(f.timestamps[t]),
                date.to_string(),
                frame_io::format_real(input.y[i]),
            ];
            row.extend(f.tracks.iter().map(|track| frame_io::format_real(track[t])));
            w.write_record(&row)?;
            i += 1;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn predict(ctx: &Context) -> Result<(), CliError> {
    let data = ctx.data()?;
    let out = ctx.out()?;
    let source: TrainingSource = read_json(&data.join(TRAINING_FILE))
        .map_err(|e| e.context("expected the output of `train`"))?;
    let cells = discover_cells(data, &[MODEL_FILE, BASELINE_FILE], &ctx.flags)?;
    cells.par_iter().try_for_each(|cell| -> Result<(), CliError> {
        let key = &cell.key;
        let (frame, hash) = load_feature_frame(&source.features, &key.plant, key.mode)?;
        let plan: SplitPlan = read_json(&cell.dir.join(SPLIT_FILE))?;
        let test_days: Vec<NaiveDate> = plan.test_days.iter().copied().collect();
        let forecaster: Box<dyn Forecaster + Sync> = if cell.dir.join(MODEL_FILE).is_file() {
            Box::new(DecomposedForecaster::load(&cell.dir.join(MODEL_FILE), Some(&hash)).map_err(|e| CliError::from(e).context(key))?)
        } else {
            let b: Baseline = read_json(&cell.dir.join(BASELINE_FILE))?;
            Box::new(SeasonalNaive {
                task: b.task,
                period: b.period,
                column: columns::POWER.to_owned(),
            })
        };
        let forecasts = forecast_days(forecaster.as_ref(), &frame, &test_days).map_err(|e| CliError::from(e).context(key))?;
        let input = EvaluationInput::from_forecasts(key.plant.clone(), &frame, &forecasts)
            .map_err(|e| CliError::from(e).context(key))?;
        let dir = out.join(&key.plant).join(&key.method).join(key.mode.label());
        fs::create_dir_all(&dir)?;
        write_forecasts(&dir.join(FORECASTS_FILE), &input, &forecasts)?;
        let days: Vec<NaiveDate> = forecasts.iter().map(|(d, _)| *d).collect();
        write_json(
            &dir.join(CELL_FILE),
            &CellInfo {
                plant: key.plant.clone(),
                method: key.method.clone(),
                mode: key.mode,
                utc_offset_minutes: frame.utc_offset_minutes(),
                quantiles: forecaster.task().quantiles.clone(),
                weather: input.weather.into_iter().filter(|(d, _)| days.contains(d)).collect(),
            },
        )?;
        log::info!("{key}: {} day(s) forecast", forecasts.len());
        Ok(())
    })?;
    let mut m = ctx.manifest("predict")?;
    m.add_input(data)?;
    m.add_input(&source.features)?;
    m.write(out)
}

/// Truth and median forecast of one predicted cell.
fn read_cell(dir: &Path) -> Result<EvaluationInput, CliError> {
    let info: CellInfo = read_json(&dir.join(CELL_FILE))?;
    let median = info
        .quantiles
        .iter()
        .position(|&q| q == 0.5)
        .ok_or_else(|| CliError::Data(format!("{}: no median track", dir.display())))?;
    let mut rdr = csv::Reader::from_path(dir.join(FORECASTS_FILE))?;
    let (mut ts, mut y, mut y_hat) = (Vec::<DateTime<Utc>>::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let cell = |i: usize| rec.get(i).ok_or_else(|| CliError::Data(format!("{}: short row", dir.display())));
        ts.push(frame_io::parse_timestamp(cell(0)?)?);
        y.push(frame_io::parse_real(cell(2)?)?);
        y_hat.push(frame_io::parse_real(cell(3 + median)?)?);
    }
    Ok(EvaluationInput::new(info.plant, ts, info.utc_offset_minutes, y, y_hat)?.with_weather(info.weather))
}

/// Method labels in configured order, then any others alphabetically.
fn ordered_methods(found: &[String], configured: &[String]) -> Vec<String> {
    let mut out: Vec<String> = configured
        .iter()
        .map(|m| method_label(m))
        .filter(|m| found.contains(m))
        .collect();
    let mut rest: Vec<String> = found.iter().filter(|m| !out.contains(m)).cloned().collect();
    rest.sort();
    rest.dedup();
    out.extend(rest);
    out.dedup();
    out
}

pub fn evaluate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let data = ctx.data()?;
    let out = ctx.out()?;
    let cells = discover_cells(data, &[CELL_FILE], &ctx.flags)?;
    let inputs: Vec<(CellKey, EvaluationInput)> = cells
        .par_iter()
        .map(|c| Ok((c.key.clone(), read_cell(&c.dir).map_err(|e| e.context(&c.key))?)))
        .collect::<Result<_, CliError>>()?;

    let mut plants: Vec<String> = inputs.iter().map(|(k, _)| k.plant.clone()).filter(|p| p != SITE_SUM).collect();
    plants.dedup();
    let found: Vec<String> = inputs.iter().map(|(k, _)| k.method.clone()).collect();
    let methods = ordered_methods(&found, &cfg.grid.methods);
    let modes: Vec<MeteorologyMode> = MeteorologyMode::ALL
        .into_iter()
        .filter(|m| inputs.iter().any(|(k, _)| k.mode == *m))
        .collect();

    let (mut scored, direct_site): (Vec<_>, Vec<_>) = inputs.into_iter().partition(|(k, _)| k.plant != SITE_SUM);
    let mut rows = plants.clone();
    if plants.len() > 1 {
        let want = |a: Aggregation| cfg.grid.aggregations.contains(&a);
        let mut site = Vec::new();
        for &mode in &modes {
            for method in &methods {
                let per_plant: Vec<EvaluationInput> = plants
                    .iter()
                    .map(|p| {
                        let key = CellKey::new(p.clone(), method.clone(), mode);
                        scored
                            .iter()
                            .find(|(k, _)| *k == key)
                            .map(|(_, i)| i.clone())
                            .ok_or_else(|| CliError::Data(format!("missing cell {key}")))
                    })
                    .collect::<Result<_, _>>()?;
                if want(Aggregation::Indiv) {
                    let key = CellKey::new(Aggregation::Indiv.site_label(), method.clone(), mode);
                    site.push((key, site_aggregate(&per_plant, Aggregation::Indiv, None)?));
                }
                if want(Aggregation::Sum) {
                    let key = CellKey::new(SITE_SUM, method.clone(), mode);
                    match direct_site.iter().find(|(k, _)| *k == key) {
                        Some((_, d)) => site.push((key, site_aggregate(&per_plant, Aggregation::Sum, Some(&d.y_hat))?)),
                        None if ctx.flags.aggregate == Some(Aggregation::Sum) => {
                            return Err(CliError::Data(format!("no forecasts for {key}; build features with --aggregate sum")));
                        }
                        None => {}
                    }
                }
            }
        }
        for a in [Aggregation::Indiv, Aggregation::Sum] {
            if site.iter().any(|(k, _)| k.plant == a.site_label()) {
                rows.push(a.site_label().to_owned());
            }
        }
        scored.extend(site);
    }

    let report = compare_methods(evaluate_grid(scored)?, &rows, &methods, &modes)?;
    report.write_all(out)?;
    log::info!("{} rows x {} methods x {} modes scored", rows.len(), methods.len(), modes.len());
    let mut m = ctx.manifest("evaluate")?;
    m.add_input(data)?;
    m.write(out)
}

#[derive(Serialize)]
struct CellLogs<'a> {
    cell: String,
    components: &'a [(String, pvcast::forecast::TrainingLog)],
}

pub fn experiment(ctx: &Context) -> Result<(), CliError> {
    let out = ctx.out()?;
    let mut cfg = ctx.config.clone();
    let plants = match &ctx.data {
        Some(_) => load_plants(ctx.data()?, &cfg)?.1,
        None => {
            let specs = synth_plants(&cfg)?;
            let site = generate_site(&cfg.synth, &specs)?;
            let set = record_set(&site);
            specs
                .into_iter()
                .map(|spec| {
                    let (hourly, ..) = hourly_frame(&set, &spec)?;
                    Ok(PlantData { spec, hourly })
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
    };
    let first = plants.first().ok_or_else(|| CliError::Data("no plants".into()))?;
    cfg.grid.split.test_period = cfg.test_period(&first.hourly)?;
    cfg.explicit_test_period = true;
    log::info!(
        "{} plant(s), test days {} to {}",
        plants.len(),
        cfg.grid.split.test_period.start,
        cfg.grid.split.test_period.end
    );

    let outcome = run_experiment(&plants, &cfg.grid, cfg.seed)?;
    outcome.report.write_all(out)?;

    let mut w = csv::Writer::from_path(out.join(FORECASTS_FILE))?;
    let quantiles = &cfg.grid.quantiles;
    let mut header: Vec<String> = ["plant", "method", "mode", "timestamp"].map(String::from).to_vec();
    header.extend(quantiles.iter().map(|q| format!("q{q}")));
    w.write_record(&header)?;
    for run in &outcome.runs {
        for (_, f) in &run.forecasts {
            for t in 0..f.len() {
                let mut row = vec![
                    run.key.plant.clone(),
                    run.key.method.clone(),
                    run.key.mode.label().to_owned(),
                    frame_io::format_timestamp(f.timestamps[t]),
                ];
                row.extend(f.tracks.iter().map(|track| frame_io::format_real(track[t])));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    let logs: Vec<CellLogs> = outcome
        .runs
        .iter()
        .map(|r| CellLogs {
            cell: r.key.to_string(),
            components: &r.logs,
        })
        .collect();
    write_json(&out.join("training_logs.json"), &logs)?;

    let mut m = Manifest::new("experiment", ctx.args.clone(), &cfg);
    if let Some(p) = &ctx.config_path {
        m.add_input(p)?;
    }
    if let Some(d) = &ctx.data {
        m.add_input(d)?;
    }
    m.write(out)
}

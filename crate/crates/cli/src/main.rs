//! `pvcast`: batch driver for ingesting plant data, building features,
//! decomposing, training, forecasting and scoring.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pvcast::eval::Aggregation;
use pvcast::features::MeteorologyMode;

use crate::commands::Context;
use crate::config::{parse_periods, parse_plants, Config, Overrides};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pvcast", version, about = "Day-ahead PV power forecasting through signal decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic plant dataset as raw CSV.
    Synth(Flags),
    /// Clean, screen and resample raw CSV exports to hourly frames.
    Ingest(Flags),
    /// Build feature frames for each meteorology mode.
    Features(Flags),
    /// Decompose each plant's power series into components.
    Decompose(Flags),
    /// Train forecasters on feature frames.
    Train(Flags),
    /// Forecast the test days with trained models.
    Predict(Flags),
    /// Score forecasts overall and per weather class.
    Evaluate(Flags),
    /// Run the full comparison grid and write the report.
    Experiment(Flags),
}

/// Flags shared by every command; a command ignores the ones it has no use
/// for.
#[derive(Debug, Clone, Args)]
struct Flags {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Input directory.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// raw, stl, mstl, emd, eemd, vmd, vmd-eemd or seasonal_naive.
    #[arg(long, value_name = "NAME")]
    method: Option<String>,
    /// Seasonal periods in hours, comma-separated.
    #[arg(long, value_name = "CSV-ints")]
    periods: Option<String>,
    /// available or unavailable.
    #[arg(long, value_parser = |s: &str| s.parse::<MeteorologyMode>())]
    mode: Option<MeteorologyMode>,
    /// indiv or sum.
    #[arg(long, value_parser = |s: &str| s.parse::<Aggregation>())]
    aggregate: Option<Aggregation>,
    /// Plant ids, comma-separated.
    #[arg(long, value_name = "CSV-ids")]
    plants: Option<String>,
}

impl Flags {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let bad = |flag: &str, e: String| CliError::Config(format!("--{flag}: {e}"));
        Ok(Overrides {
            seed: self.seed,
            jobs: self.jobs,
            method: self.method.clone(),
            periods: self.periods.as_deref().map(parse_periods).transpose().map_err(|e| bad("periods", e))?,
            mode: self.mode,
            aggregate: self.aggregate,
            plants: self.plants.as_deref().map(parse_plants).transpose().map_err(|e| bad("plants", e))?,
        })
    }
}

fn run(command: Command, args: Vec<String>) -> Result<(), CliError> {
    let (flags, action): (Flags, fn(&Context) -> Result<(), CliError>) = match command {
        Command::Synth(f) => (f, commands::synth),
        Command::Ingest(f) => (f, commands::ingest),
        Command::Features(f) => (f, commands::features),
        Command::Decompose(f) => (f, commands::decompose_cmd),
        Command::Train(f) => (f, commands::train),
        Command::Predict(f) => (f, commands::predict),
        Command::Evaluate(f) => (f, commands::evaluate),
        Command::Experiment(f) => (f, commands::experiment),
    };
    let overrides = flags.overrides()?;
    let config = Config::resolve(flags.config.as_deref(), &overrides)?;
    if let Some(n) = config.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let ctx = Context {
        config,
        config_path: flags.config,
        flags: overrides,
        data: flags.data,
        out: flags.out,
        args,
    };
    action(&ctx)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.render().to_string().trim().to_owned());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(cli.command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

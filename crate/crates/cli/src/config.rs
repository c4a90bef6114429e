//! Run configuration: a JSON file whose fields all have defaults, with
//! command-line flags applied on top.

use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use pvcast::eval::Aggregation;
use pvcast::experiment::GridSpec;
use pvcast::features::MeteorologyMode;
use pvcast::frame::TestPeriod;
use pvcast::ingest::{CsvSchema, PlantSpec};
use pvcast::synth::{SynthConfig, DEFAULT_UTC_OFFSET_MINUTES};
use pvcast::FeatureFrame;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Seeds every stochastic stage: synthesis, splitting and training.
    pub seed: u64,
    /// Worker threads; all cores when absent.
    pub jobs: Option<usize>,
    /// Plant ids to process; empty means every plant in the data.
    pub plants: Vec<String>,
    /// Static plant properties, looked up by id when the data carries none.
    pub plant_specs: Vec<PlantSpec>,
    /// Raw CSV header to canonical field mapping.
    pub schema: CsvSchema,
    /// Offset of naive CSV timestamps from UTC.
    pub utc_offset_minutes: i32,
    pub synth: SynthConfig,
    #[serde(flatten)]
    pub grid: GridSpec,
    /// Set when the file names a test period; otherwise one is chosen from
    /// the data.
    #[serde(skip)]
    pub explicit_test_period: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: None,
            plants: Vec::new(),
            plant_specs: PlantSpec::dkasc_plants(),
            schema: CsvSchema::default(),
            utc_offset_minutes: DEFAULT_UTC_OFFSET_MINUTES,
            synth: SynthConfig::default(),
            grid: GridSpec::default(),
            explicit_test_period: false,
        }
    }
}

/// Values given on the command line; `None` leaves the config value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub method: Option<String>,
    pub periods: Option<Vec<usize>>,
    pub mode: Option<MeteorologyMode>,
    pub aggregate: Option<Aggregation>,
    pub plants: Option<Vec<String>>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
        // Flattening the grid settings disables serde's unknown-field check,
        // so top-level keys are checked against the defaults here.
        let known = serde_json::to_value(Config::default())?;
        if let (Some(given), Some(known)) = (value.as_object(), known.as_object()) {
            if let Some(key) = given.keys().find(|k| !known.contains_key(*k)) {
                return Err(CliError::Config(format!("unknown config key `{key}`")));
            }
        }
        let explicit_test_period = value.pointer("/split/test_period").is_some();
        let mut cfg: Config =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.explicit_test_period = explicit_test_period;
        Ok(cfg)
    }

    /// Defaults, then the file at `path` if any, then `flags`.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, flags: &Overrides) {
        if let Some(seed) = flags.seed {
            self.seed = seed;
        }
        if let Some(jobs) = flags.jobs {
            self.jobs = Some(jobs);
        }
        if let Some(method) = &flags.method {
            self.grid.methods = vec![method.clone()];
        }
        if let Some(periods) = &flags.periods {
            self.grid.periods = periods.clone();
        }
        if let Some(mode) = flags.mode {
            self.grid.modes = vec![mode];
        }
        if let Some(a) = flags.aggregate {
            self.grid.aggregations = vec![a];
        }
        if let Some(plants) = &flags.plants {
            self.plants = plants.clone();
        }
        self.synth.rng_seed = self.seed;
        self.grid.split.seed = self.seed;
        self.grid.train.seed = self.seed;
        self.grid.decomp.eemd.rng_seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        self.grid.validate()?;
        Ok(())
    }

    pub fn plant_spec(&self, id: &str) -> Option<&PlantSpec> {
        self.plant_specs.iter().find(|p| p.plant_id == id)
    }

    /// Test period of the split: the configured one, else calendar year
    /// 2020 when the data reaches into it, else the middle quarter of the
    /// covered days.
    pub fn test_period(&self, frame: &FeatureFrame) -> Result<TestPeriod, CliError> {
        if self.explicit_test_period {
            return Ok(self.grid.split.test_period);
        }
        let days: Vec<NaiveDate> = frame.day_groups().into_keys().collect();
        if days.len() < 4 {
            return Err(CliError::Data(format!("only {} days of data; a split needs at least 4", days.len())));
        }
        let year = TestPeriod::year(2020);
        if days[0].year() < 2020 && days.iter().any(|d| year.contains(*d)) {
            return Ok(year);
        }
        let n = days.len();
        let first = 3 * n / 8;
        let last = (first + n / 4).min(n - 1);
        Ok(TestPeriod {
            start: days[first],
            end: days[last],
        })
    }
}

/// Parses a comma-separated list of positive integers.
pub fn parse_periods(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|p| {
            let p = p.trim();
            match p.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(format!("`{p}` is not a positive integer")),
            }
        })
        .collect()
}

/// Parses a comma-separated list of plant ids.
pub fn parse_plants(text: &str) -> Result<Vec<String>, String> {
    let ids: Vec<String> = text.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
    if ids.is_empty() {
        Err("expected at least one plant id".into())
    } else {
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let mut cfg = Config::from_json(r#"{"seed": 3, "methods": ["raw", "stl"], "periods": [24, 168]}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        cfg.apply(&Overrides {
            seed: Some(9),
            method: Some("emd".into()),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.grid.methods, vec!["emd".to_owned()]);
        assert_eq!(cfg.grid.periods, vec![24, 168]);
        assert_eq!(cfg.grid.train.seed, 9);
    }

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        let err = Config::from_json(r#"{"methdos": ["raw"]}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(Config::from_json(r#"{"jobs": 2, "train": {"hidden": [8]}}"#).is_ok());
    }

    #[test]
    fn test_period_is_detected_only_when_given() {
        assert!(!Config::from_json("{}").unwrap().explicit_test_period);
        let cfg = Config::from_json(r#"{"split": {"test_period": {"start": "2019-02-01", "end": "2019-03-01"}}}"#).unwrap();
        assert!(cfg.explicit_test_period);
    }

    #[test]
    fn malformed_config_is_a_config_error() {
        assert!(matches!(Config::from_json("{"), Err(CliError::Config(_))));
        assert!(matches!(Config::from_json(r#"{"seed": "x"}"#), Err(CliError::Config(_))));
    }

    #[test]
    fn list_flags_parse() {
        assert_eq!(parse_periods("24, 168").unwrap(), vec![24, 168]);
        assert!(parse_periods("24,0").is_err());
        assert!(parse_periods("a").is_err());
        assert_eq!(parse_plants("PV-01,PV-02").unwrap(), vec!["PV-01", "PV-02"]);
        assert!(parse_plants(",").is_err());
    }
}

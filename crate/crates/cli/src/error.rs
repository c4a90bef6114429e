use pvcast::decomp::DecompError;
use pvcast::eval::EvalError;
use pvcast::experiment::ExperimentError;
use pvcast::features::FeatureError;
use pvcast::forecast::ForecastError;
use pvcast::ingest::IngestError;
use pvcast::synth::SynthError;
use pvcast::FrameError;
use serde::Serialize;
use thiserror::Error;

/// Failure of a command, grouped by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'static str,
    exit_code: i32,
    message: &'a str,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    /// One-line JSON object for standard error.
    pub fn to_json(&self) -> String {
        let message = self.to_string();
        let report = ErrorReport {
            error: ErrorBody {
                kind: self.kind(),
                exit_code: self.exit_code(),
                message: &message,
            },
        };
        serde_json::to_string(&report).expect("error report serializes")
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{what}: {m}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::BadSplitSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::UnknownField { .. } | IngestError::BadBounds(_) | IngestError::BadRating(_) => {
                CliError::Config(e.to_string())
            }
            IngestError::Frame(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Frame(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DecompError> for CliError {
    fn from(e: DecompError) -> Self {
        match e {
            DecompError::PeriodsNotAscending(_) | DecompError::InvalidParams(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::InvalidTask(_) | ForecastError::InvalidConfig(_) => CliError::Config(e.to_string()),
            ForecastError::DivergedLoss { .. } => CliError::Numeric(e.to_string()),
            ForecastError::Decomp(d) => d.into(),
            ForecastError::Frame(f) => f.into(),
            ForecastError::Feature(f) => f.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ZeroYMax(_) | EvalError::Empty => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(m) => CliError::Config(m),
            ExperimentError::Cell { cell, source } => CliError::from(source).context(cell),
            ExperimentError::Forecast(f) => f.into(),
            ExperimentError::Eval(f) => f.into(),
            ExperimentError::Feature(f) => f.into(),
            ExperimentError::Frame(f) => f.into(),
        }
    }
}

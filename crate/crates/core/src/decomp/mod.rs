//! Additive decompositions: LOESS-based STL and MSTL, EMD and ensemble EMD,
//! and VMD (optionally cascaded into ensemble EMD).

mod emd;
mod loess;
mod stl;
mod vmd;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Real};

pub use emd::{eemd, emd, EemdParams, EmdParams};
pub use loess::loess;
pub use stl::{mstl, stl, MstlParams, StlParams};
pub use vmd::{vmd, vmd_then_eemd, VmdParams};

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("series too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("periods must be strictly ascending, got {0:?}")]
    PeriodsNotAscending(Vec<usize>),
    #[error("series contains missing or non-finite values")]
    MissingValues,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Stl,
    Mstl,
    Emd,
    Eemd,
    Vmd,
    VmdEemd,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Stl => "stl",
            Method::Mstl => "mstl",
            Method::Emd => "emd",
            Method::Eemd => "eemd",
            Method::Vmd => "vmd",
            Method::VmdEemd => "vmd_eemd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "stl" => Ok(Method::Stl),
            "mstl" => Ok(Method::Mstl),
            "emd" => Ok(Method::Emd),
            "eemd" => Ok(Method::Eemd),
            "vmd" => Ok(Method::Vmd),
            "vmd_eemd" => Ok(Method::VmdEemd),
            other => Err(format!("unknown decomposition method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ComponentKind {
    Trend,
    Seasonal { period: usize },
    Remainder,
    Imf { index: usize },
    Residue,
    /// Center frequency in cycles per sample.
    Mode { center_frequency: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component<T: Real = f64> {
    pub name: String,
    pub kind: ComponentKind,
    pub values: Vec<T>,
}

impl<T: Real> Component<T> {
    pub fn new(name: impl Into<String>, kind: ComponentKind, values: Vec<T>) -> Self {
        Self {
            name: name.into(),
            kind,
            values,
        }
    }
}

/// Named components of one decomposition, each as long as the source.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult<T: Real = f64> {
    pub method: Method,
    pub components: Vec<Component<T>>,
    pub source_length: usize,
    /// False when an iterative method stopped at its iteration cap.
    pub converged: bool,
}

impl<T: Real> DecompositionResult<T> {
    pub fn new(method: Method, components: Vec<Component<T>>) -> Self {
        let source_length = components.first().map_or(0, |c| c.values.len());
        debug_assert!(components.iter().all(|c| c.values.len() == source_length));
        Self {
            method,
            components,
            source_length,
            converged: true,
        }
    }

    pub fn component(&self, name: &str) -> Option<&[T]> {
        self.components.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn names(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.name.as_str()).collect()
    }

    /// Pointwise sum of all components in order.
    pub fn recompose(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.source_length];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(&c.values) {
                *o = *o + *v;
            }
        }
        out
    }

    /// Largest absolute difference between the recomposition and `source`.
    pub fn reconstruction_error(&self, source: &[T]) -> T {
        let back = self.recompose();
        let diff: Vec<T> = back.iter().zip(source).map(|(&a, &b)| a - b).collect();
        scalar::max_abs(&diff)
    }

    /// One column per component with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DecompError> {
        writeln!(out, "{}", self.names().join(","))?;
        for i in 0..self.source_length {
            let row: Vec<String> = self.components.iter().map(|c| format!("{:?}", c.values[i].to_f64_lossy())).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Method, parameters, component descriptions and reconstruction error.
    pub fn metadata(&self, params: &DecompConfig, source: &[T]) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "params": params,
            "source_length": self.source_length,
            "converged": self.converged,
            "reconstruction_max_abs_error": self.reconstruction_error(source).to_f64_lossy(),
            "components": self.components.iter().map(|c| serde_json::json!({
                "name": c.name,
                "kind": c.kind,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Method choice plus the parameters of every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompConfig {
    pub method: Method,
    /// Seasonal periods in samples, ascending (STL uses the first).
    pub periods: Vec<usize>,
    pub seasonal_window: usize,
    pub robust: bool,
    pub mstl_rounds: usize,
    pub emd: EmdParams,
    pub eemd: EemdParams,
    pub vmd: VmdParams,
}

impl Default for DecompConfig {
    fn default() -> Self {
        Self {
            method: Method::Mstl,
            periods: vec![24],
            seasonal_window: StlParams::DEFAULT_SEASONAL_WINDOW,
            robust: false,
            mstl_rounds: 2,
            emd: EmdParams::default(),
            eemd: EemdParams::default(),
            vmd: VmdParams::default(),
        }
    }
}

impl DecompConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    fn stl_params(&self, period: usize) -> StlParams {
        let p = StlParams::with_seasonal_window(period, self.seasonal_window);
        if self.robust {
            p.robust()
        } else {
            p
        }
    }

    pub fn mstl_params(&self) -> MstlParams {
        MstlParams {
            stl: self.periods.iter().map(|&p| self.stl_params(p)).collect(),
            rounds: self.mstl_rounds,
        }
    }
}

/// Runs the configured method.
pub fn decompose<T: Real>(y: &[T], cfg: &DecompConfig) -> Result<DecompositionResult<T>, DecompError> {
    match cfg.method {
        Method::Stl => {
            let period = *cfg
                .periods
                .first()
                .ok_or_else(|| DecompError::InvalidParams("STL needs a period".into()))?;
            stl(y, &cfg.stl_params(period))
        }
        Method::Mstl => mstl(y, &cfg.mstl_params()),
        Method::Emd => emd(y, &cfg.emd),
        Method::Eemd => eemd(y, &cfg.eemd),
        Method::Vmd => vmd(y, &cfg.vmd),
        Method::VmdEemd => vmd_then_eemd(y, &cfg.vmd, &cfg.eemd),
    }
}

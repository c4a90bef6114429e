//! Day-ahead photovoltaic power forecasting toolkit.
//!
//! The pipeline ingests plant and meteorological records, engineers tagged
//! features, decomposes generation into trend / seasonal / remainder (or
//! IMF / mode) components, trains quantile forecasters and scores them with
//! capacity-normalised error metrics.
//!
//! Numeric kernels are generic over [`Real`] (`f32` or `f64`); the aliases
//! below pin the `f64` instantiations used by the pipeline.

pub mod decomp;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod forecast;
pub mod frame;
pub mod ingest;
pub mod scalar;
pub mod series;
pub mod synth;

pub use frame::{FeatureFrame, FeatureTag, FrameError};
pub use scalar::Real;
pub use series::{TimeSeries, MISSING};

pub type Decomposition = decomp::DecompositionResult<f64>;
pub type Decomposition32 = decomp::DecompositionResult<f32>;
pub type Component = decomp::Component<f64>;
pub type Component32 = decomp::Component<f32>;
pub type Network = forecast::Mlp<f64>;
pub type Network32 = forecast::Mlp<f32>;
pub type DailyIrradiance = features::DailyIrradiance<f64>;
pub type DailyIrradiance32 = features::DailyIrradiance<f32>;

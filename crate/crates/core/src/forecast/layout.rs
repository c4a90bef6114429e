use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ForecastError, ForecastTask};
use crate::features::{ColumnScale, NormalizationParams};
use crate::frame::{ColumnData, FeatureFrame, StaticValue};
use crate::series;

/// One block of the model input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum InputSource {
    /// Unknown real column over the input horizon.
    History { column: String },
    /// Known real column over the input and forecast horizons.
    Window { column: String },
    HistoryCategorical { column: String, size: usize },
    WindowCategorical { column: String, size: usize },
    StaticReal { field: String, scale: ColumnScale },
    StaticCategorical { field: String, size: usize },
}

/// How a context window is flattened into the network input. Derived from
/// column tags, so unknown features never contribute future values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputLayout {
    pub input_horizon: usize,
    pub forecast_horizon: usize,
    pub sources: Vec<InputSource>,
}

impl InputLayout {
    pub fn from_frame(frame: &FeatureFrame, task: &ForecastTask) -> Self {
        let mut sources = Vec::new();
        for (name, column) in frame.columns() {
            let column_name = name.clone();
            let known = column.tag.is_known();
            sources.push(match (&column.data, known) {
                (ColumnData::Real(_), false) => InputSource::History { column: column_name },
                (ColumnData::Real(_), true) => InputSource::Window { column: column_name },
                (ColumnData::Categorical { vocabulary, .. }, known) => {
                    let size = frame.vocabulary(vocabulary).map_or(0, <[String]>::len);
                    if known {
                        InputSource::WindowCategorical { column: column_name, size }
                    } else {
                        InputSource::HistoryCategorical { column: column_name, size }
                    }
                }
            });
        }
        for (name, field) in frame.statics() {
            sources.push(match &field.value {
                StaticValue::Real(v) => InputSource::StaticReal {
                    field: name.clone(),
                    scale: ColumnScale::fit([*v]),
                },
                StaticValue::Categorical { vocabulary, .. } => InputSource::StaticCategorical {
                    field: name.clone(),
                    size: frame.vocabulary(vocabulary).map_or(0, <[String]>::len),
                },
            });
        }
        Self {
            input_horizon: task.input_horizon,
            forecast_horizon: task.forecast_horizon,
            sources,
        }
    }

    pub fn width(&self) -> usize {
        let (i, w) = (self.input_horizon, self.input_horizon + self.forecast_horizon);
        self.sources
            .iter()
            .map(|s| match s {
                InputSource::History { .. } => i,
                InputSource::Window { .. } => w,
                InputSource::HistoryCategorical { size, .. } => i * size,
                InputSource::WindowCategorical { size, .. } => w * size,
                InputSource::StaticReal { .. } => 1,
                InputSource::StaticCategorical { size, .. } => *size,
            })
            .sum()
    }

    /// Real columns the layout reads; the normaliser must cover them.
    pub fn real_columns(&self) -> Vec<&str> {
        self.sources
            .iter()
            .filter_map(|s| match s {
                InputSource::History { column } | InputSource::Window { column } => Some(column.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Checks that rows `origin - input_horizon .. origin + forecast_horizon`
    /// exist and are evenly spaced.
    pub fn check_window(&self, frame: &FeatureFrame, origin: usize) -> Result<(), ForecastError> {
        if origin < self.input_horizon || origin + self.forecast_horizon > frame.len() {
            return Err(ForecastError::IncompleteContext(origin));
        }
        let first = origin - self.input_horizon;
        let last = origin + self.forecast_horizon - 1;
        let span = (frame.index()[last] - frame.index()[first]).num_seconds();
        if span != (last - first) as i64 * frame.resolution_secs() {
            return Err(ForecastError::IncompleteContext(origin));
        }
        Ok(())
    }

    /// Appends the normalised input vector of the window ending the history
    /// at `origin`. Missing values become zero.
    pub fn encode(
        &self,
        frame: &FeatureFrame,
        origin: usize,
        norm: &NormalizationParams,
        out: &mut Vec<f64>,
    ) -> Result<(), ForecastError> {
        self.check_window(frame, origin)?;
        let start = origin - self.input_horizon;
        let history = start..origin;
        let window = start..origin + self.forecast_horizon;
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        let missing = |name: &str| ForecastError::MissingKnownFeatures(name.to_owned());
        for source in &self.sources {
            match source {
                InputSource::History { column } | InputSource::Window { column } => {
                    let values = frame.real(column).ok_or_else(|| missing(column))?;
                    let scale = norm.scale(column)?;
                    let rows = if matches!(source, InputSource::History { .. }) {
                        history.clone()
                    } else {
                        window.clone()
                    };
                    out.extend(values[rows].iter().map(|&v| finite(scale.apply(v))));
                }
                InputSource::HistoryCategorical { column, size } | InputSource::WindowCategorical { column, size } => {
                    let (_, ids) = frame.categorical(column).ok_or_else(|| missing(column))?;
                    let rows = if matches!(source, InputSource::HistoryCategorical { .. }) {
                        history.clone()
                    } else {
                        window.clone()
                    };
                    for &id in &ids[rows] {
                        let at = out.len();
                        out.resize(at + size, 0.0);
                        if let Some(id) = id.filter(|&id| (id as usize) < *size) {
                            out[at + id as usize] = 1.0;
                        }
                    }
                }
                InputSource::StaticReal { field, scale } => {
                    let value = match frame.statics().get(field).map(|f| &f.value) {
                        Some(StaticValue::Real(v)) => *v,
                        _ => return Err(missing(field)),
                    };
                    out.push(finite(scale.apply(value)));
                }
                InputSource::StaticCategorical { field, size } => {
                    let id = match frame.statics().get(field).map(|f| &f.value) {
                        Some(StaticValue::Categorical { id, .. }) => *id as usize,
                        _ => return Err(missing(field)),
                    };
                    let at = out.len();
                    out.resize(at + size, 0.0);
                    if id < *size {
                        out[at + id] = 1.0;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Row of local midnight of `day`, when present.
pub fn day_origin(frame: &FeatureFrame, day: NaiveDate) -> Option<usize> {
    frame.position(series::local_midnight(day, frame.utc_offset_minutes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::MeteorologyMode;
    use crate::frame::test_support::{hourly_frame, ymd};
    use crate::frame::FeatureTag;

    fn frame() -> FeatureFrame {
        let mut f = hourly_frame(ymd(2020, 1, 1), 24 * 5);
        let n = f.len();
        f.add_real("power", FeatureTag::UNKNOWN_REAL, None, (0..n).map(|i| i as f64).collect()).unwrap();
        f.add_real("ghi", FeatureTag::KNOWN_REAL, None, (0..n).map(|i| (i % 24) as f64).collect()).unwrap();
        f.register_vocabulary("w", vec!["a".into(), "b".into()]).unwrap();
        f.add_categorical("weather", FeatureTag::UNKNOWN_CATEGORICAL, "w", vec![Some(1); n]).unwrap();
        f.add_static_real("rating", None, 5.0).unwrap();
        f
    }

    #[test]
    fn widths_follow_tags() {
        let f = frame();
        let layout = InputLayout::from_frame(&f, &ForecastTask::new(MeteorologyMode::Available));
        assert_eq!(layout.width(), 72 + 96 + 72 * 2 + 1);
        let norm = NormalizationParams::fit_lenient(&f, None);
        let mut v = Vec::new();
        layout.encode(&f, 72, &norm, &mut v).unwrap();
        assert_eq!(v.len(), layout.width());
        assert_eq!(v[72 + 96], 0.0);
        assert_eq!(v[72 + 96 + 1], 1.0);
        assert_eq!(*v.last().unwrap(), 0.0);
    }

    #[test]
    fn windows_must_fit() {
        let f = frame();
        let layout = InputLayout::from_frame(&f, &ForecastTask::new(MeteorologyMode::Available));
        let norm = NormalizationParams::fit_lenient(&f, None);
        let mut v = Vec::new();
        assert!(layout.encode(&f, 71, &norm, &mut v).is_err());
        assert!(layout.encode(&f, 24 * 4 + 1, &norm, &mut v).is_err());
        assert_eq!(day_origin(&f, ymd(2020, 1, 4).date_naive()), Some(72));
    }
}

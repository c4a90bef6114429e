use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::frame::{ColumnData, FeatureFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnScale {
    MinMax { min: f64, max: f64 },
    /// Constant (or empty) training column; mapped to `x - value`.
    Constant { value: f64 },
}

impl ColumnScale {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ColumnScale::MinMax { min, max } => (x - min) / (max - min),
            ColumnScale::Constant { value } => x - value,
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        match *self {
            ColumnScale::MinMax { min, max } => min + z * (max - min),
            ColumnScale::Constant { value } => z + value,
        }
    }

    /// Multiplier converting a normalised difference back to data units.
    pub fn span(&self) -> f64 {
        match *self {
            ColumnScale::MinMax { min, max } => max - min,
            ColumnScale::Constant { .. } => 1.0,
        }
    }

    /// Fits on the finite values of `values`.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> ColumnScale {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            ColumnScale::Constant { value: 0.0 }
        } else if lo == hi {
            ColumnScale::Constant { value: lo }
        } else {
            ColumnScale::MinMax { min: lo, max: hi }
        }
    }
}

/// Per-column min-max parameters, fitted on training rows only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub columns: IndexMap<String, ColumnScale>,
}

/// Fits min-max parameters on every time-varying real column of `train`.
/// Constant columns are an error; see [`NormalizationParams::fit_lenient`].
pub fn fit_normalizer(train: &FeatureFrame) -> Result<NormalizationParams, FeatureError> {
    let params = NormalizationParams::fit_lenient(train, None);
    if let Some((name, _)) = params
        .columns
        .iter()
        .find(|(_, s)| matches!(s, ColumnScale::Constant { .. }))
    {
        return Err(FeatureError::DegenerateColumn(name.clone()));
    }
    Ok(params)
}

impl NormalizationParams {
    /// Fits on the given rows (all rows when `None`). Constant columns are
    /// kept and shifted rather than rejected.
    pub fn fit_lenient(frame: &FeatureFrame, rows: Option<&[usize]>) -> Self {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..frame.len()).collect();
                &all
            }
        };
        let columns = frame
            .columns()
            .iter()
            .filter_map(|(name, c)| match &c.data {
                ColumnData::Real(v) => Some((name.clone(), ColumnScale::fit(rows.iter().map(|&r| v[r])))),
                ColumnData::Categorical { .. } => None,
            })
            .collect();
        Self { columns }
    }

    pub fn scale(&self, column: &str) -> Result<ColumnScale, FeatureError> {
        self.columns
            .get(column)
            .copied()
            .ok_or_else(|| FeatureError::UnknownColumn(column.to_owned()))
    }

    /// Maps `x` into training units; test values may fall outside [0, 1].
    pub fn apply(&self, column: &str, x: f64) -> Result<f64, FeatureError> {
        Ok(self.scale(column)?.apply(x))
    }

    pub fn invert(&self, column: &str, z: f64) -> Result<f64, FeatureError> {
        Ok(self.scale(column)?.invert(z))
    }

    /// Normalised copy of every fitted column of `frame`.
    pub fn apply_frame(&self, frame: &FeatureFrame) -> Result<FeatureFrame, FeatureError> {
        let mut out = frame.clone();
        for (name, scale) in &self.columns {
            if let Some(values) = frame.real(name) {
                out.replace_real(name, values.iter().map(|&x| scale.apply(x)).collect())?;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FeatureTag;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn frame(values: Vec<f64>) -> FeatureFrame {
        let t0 = Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap();
        let index = (0..values.len()).map(|i| t0 + chrono::Duration::hours(i as i64)).collect();
        let mut f = FeatureFrame::new(index, 3600, 0).unwrap();
        f.add_real("x", FeatureTag::KNOWN_REAL, None, values).unwrap();
        f
    }

    #[test]
    fn midpoint_maps_to_half() {
        let p = fit_normalizer(&frame(vec![0.0, 10.0])).unwrap();
        assert_eq!(p.apply("x", 5.0).unwrap(), 0.5);
    }

    #[test]
    fn round_trip_value() {
        let p = fit_normalizer(&frame(vec![0.0, 10.0])).unwrap();
        let z = p.apply("x", 7.3).unwrap();
        assert!((p.invert("x", z).unwrap() - 7.3).abs() < 1e-15);
    }

    #[test]
    fn test_values_are_not_clipped() {
        let p = fit_normalizer(&frame(vec![0.0, 10.0])).unwrap();
        assert!((p.apply("x", 12.0).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_degenerate() {
        assert!(matches!(
            fit_normalizer(&frame(vec![3.0, 3.0, f64::NAN])),
            Err(FeatureError::DegenerateColumn(_))
        ));
        let p = NormalizationParams::fit_lenient(&frame(vec![3.0, 3.0]), None);
        assert_eq!(p.apply("x", 3.0).unwrap(), 0.0);
        assert_eq!(p.invert("x", 0.5).unwrap(), 3.5);
    }

    #[test]
    fn fit_ignores_rows_outside_training() {
        let f = frame(vec![0.0, 10.0, 1000.0]);
        let p = NormalizationParams::fit_lenient(&f, Some(&[0, 1]));
        let q = NormalizationParams::fit_lenient(&f.select_rows(&[0, 1]), None);
        assert_eq!(p, q);
    }

    proptest! {
        #[test]
        fn invert_after_apply_is_identity(train in prop::collection::vec(-1e3f64..1e3, 2..20), x in -1e4f64..1e4) {
            prop_assume!(train.iter().any(|v| *v != train[0]));
            let p = fit_normalizer(&frame(train)).unwrap();
            let back = p.invert("x", p.apply("x", x).unwrap()).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }

        #[test]
        fn training_values_map_into_unit_interval(train in prop::collection::vec(-1e3f64..1e3, 2..20)) {
            prop_assume!(train.iter().any(|v| *v != train[0]));
            let f = frame(train.clone());
            let p = fit_normalizer(&f).unwrap();
            for x in train {
                let z = p.apply("x", x).unwrap();
                prop_assert!((0.0..=1.0).contains(&z));
            }
        }
    }
}

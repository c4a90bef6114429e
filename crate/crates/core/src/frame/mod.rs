//! Tagged feature frames: the shared data model for features, training and
//! evaluation.
//!
//! A frame is a set of columns over a common, strictly increasing timestamp
//! index. Every column carries a [`FeatureTag`] that says whether it varies
//! in time, whether it is observable over the forecast horizon, and whether
//! it is real-valued or categorical.

mod align;
pub mod io;
mod split;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{self, TimeSeries};

pub use align::align;
pub use split::{plan_split, split, SplitPart, SplitPlan, SplitSpec, TestPeriod};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("static features are always known; (static, unknown) is not a valid tag")]
    StaticUnknown,
    #[error("column `{0}` already exists")]
    DuplicateColumn(String),
    #[error("column `{name}` has {got} rows, frame has {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("vocabulary `{0}` is not registered")]
    UnknownVocabulary(String),
    #[error("vocabulary `{0}` is registered twice with different labels")]
    VocabularyConflict(String),
    #[error("invalid vocabulary `{0}`: labels must be unique and non-empty")]
    BadVocabulary(String),
    #[error("category id {id} out of range for vocabulary `{vocabulary}`")]
    CategoryOutOfRange { vocabulary: String, id: u32 },
    #[error("tag {tag} does not fit the data of `{name}`")]
    TagMismatch { name: String, tag: FeatureTag },
    #[error("frame index must be strictly increasing (row {0})")]
    UnorderedIndex(usize),
    #[error("frames disagree on {0}")]
    Incompatible(&'static str),
    #[error("frames share no timestamps")]
    EmptyIntersection,
    #[error("no frames to align")]
    NoFrames,
    #[error("frame does not cover the test period plus one earlier day")]
    SpanTooShort,
    #[error("invalid split specification: {0}")]
    BadSplitSpec(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("frame persistence: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    TimeVarying,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knowledge {
    Known,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Real,
    Categorical,
}

#[derive(Deserialize)]
struct RawTag {
    temporal: Temporal,
    knowledge: Knowledge,
    kind: ValueKind,
}

/// Feature taxonomy: time-varying known/unknown reals and categoricals plus
/// static reals and categoricals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTag")]
pub struct FeatureTag {
    temporal: Temporal,
    knowledge: Knowledge,
    kind: ValueKind,
}

impl TryFrom<RawTag> for FeatureTag {
    type Error = FrameError;

    fn try_from(raw: RawTag) -> Result<Self, Self::Error> {
        FeatureTag::new(raw.temporal, raw.knowledge, raw.kind)
    }
}

impl FeatureTag {
    pub const KNOWN_REAL: Self = Self::tv(Knowledge::Known, ValueKind::Real);
    pub const UNKNOWN_REAL: Self = Self::tv(Knowledge::Unknown, ValueKind::Real);
    pub const KNOWN_CATEGORICAL: Self = Self::tv(Knowledge::Known, ValueKind::Categorical);
    pub const UNKNOWN_CATEGORICAL: Self = Self::tv(Knowledge::Unknown, ValueKind::Categorical);
    pub const STATIC_REAL: Self = Self {
        temporal: Temporal::Static,
        knowledge: Knowledge::Known,
        kind: ValueKind::Real,
    };
    pub const STATIC_CATEGORICAL: Self = Self {
        temporal: Temporal::Static,
        knowledge: Knowledge::Known,
        kind: ValueKind::Categorical,
    };

    const fn tv(knowledge: Knowledge, kind: ValueKind) -> Self {
        Self {
            temporal: Temporal::TimeVarying,
            knowledge,
            kind,
        }
    }

    pub fn new(temporal: Temporal, knowledge: Knowledge, kind: ValueKind) -> Result<Self, FrameError> {
        if temporal == Temporal::Static && knowledge == Knowledge::Unknown {
            return Err(FrameError::StaticUnknown);
        }
        Ok(Self {
            temporal,
            knowledge,
            kind,
        })
    }

    pub fn temporal(&self) -> Temporal {
        self.temporal
    }

    pub fn knowledge(&self) -> Knowledge {
        self.knowledge
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn is_known(&self) -> bool {
        self.knowledge == Knowledge::Known
    }

    pub fn is_static(&self) -> bool {
        self.temporal == Temporal::Static
    }

    pub fn is_real(&self) -> bool {
        self.kind == ValueKind::Real
    }
}

impl fmt::Display for FeatureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ValueKind::Real => "Reals",
            ValueKind::Categorical => "Categorical",
        };
        match (self.temporal, self.knowledge) {
            (Temporal::Static, _) => write!(f, "Static {kind}"),
            (Temporal::TimeVarying, Knowledge::Known) => write!(f, "Time Varying Known {kind}"),
            (Temporal::TimeVarying, Knowledge::Unknown) => write!(f, "Time Varying Unknown {kind}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Real(Vec<f64>),
    /// Ids into a registered vocabulary; `None` is a missing entry.
    Categorical {
        vocabulary: String,
        ids: Vec<Option<u32>>,
    },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Real(v) => v.len(),
            ColumnData::Categorical { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Real(v) => ColumnData::Real(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { vocabulary, ids } => ColumnData::Categorical {
                vocabulary: vocabulary.clone(),
                ids: rows.iter().map(|&r| ids[r]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub tag: FeatureTag,
    pub unit: Option<String>,
    pub data: ColumnData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticValue {
    Real(f64),
    Categorical { vocabulary: String, id: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticField {
    pub tag: FeatureTag,
    pub unit: Option<String>,
    pub value: StaticValue,
}

/// Aligned, tagged columns over a shared timestamp index.
///
/// The index is strictly increasing but need not be contiguous: training and
/// validation subsets are whole days drawn from across the calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    index: Vec<DateTime<Utc>>,
    resolution_secs: i64,
    utc_offset_minutes: i32,
    columns: IndexMap<String, Column>,
    statics: IndexMap<String, StaticField>,
    vocabularies: IndexMap<String, Vec<String>>,
}

impl FeatureFrame {
    pub fn new(
        index: Vec<DateTime<Utc>>,
        resolution_secs: i64,
        utc_offset_minutes: i32,
    ) -> Result<Self, FrameError> {
        if resolution_secs <= 0 {
            return Err(FrameError::Format(format!("resolution {resolution_secs}s")));
        }
        if let Some(i) = (1..index.len()).find(|&i| index[i] <= index[i - 1]) {
            return Err(FrameError::UnorderedIndex(i));
        }
        Ok(Self {
            index,
            resolution_secs,
            utc_offset_minutes,
            columns: IndexMap::new(),
            statics: IndexMap::new(),
            vocabularies: IndexMap::new(),
        })
    }

    /// Empty frame over the timestamps of `series`.
    pub fn over(series: &TimeSeries) -> Self {
        Self {
            index: series.timestamps(),
            resolution_secs: series.resolution_secs(),
            utc_offset_minutes: series.utc_offset_minutes(),
            columns: IndexMap::new(),
            statics: IndexMap::new(),
            vocabularies: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self) -> &[DateTime<Utc>] {
        &self.index
    }

    pub fn resolution_secs(&self) -> i64 {
        self.resolution_secs
    }

    pub fn utc_offset_minutes(&self) -> i32 {
        self.utc_offset_minutes
    }

    pub fn columns(&self) -> &IndexMap<String, Column> {
        &self.columns
    }

    pub fn statics(&self) -> &IndexMap<String, StaticField> {
        &self.statics
    }

    pub fn vocabularies(&self) -> &IndexMap<String, Vec<String>> {
        &self.vocabularies
    }

    pub fn vocabulary(&self, name: &str) -> Option<&[String]> {
        self.vocabularies.get(name).map(Vec::as_slice)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    pub fn real(&self, name: &str) -> Option<&[f64]> {
        match self.columns.get(name).map(|c| &c.data) {
            Some(ColumnData::Real(v)) => Some(v),
            _ => None,
        }
    }

    pub fn categorical(&self, name: &str) -> Option<(&str, &[Option<u32>])> {
        match self.columns.get(name).map(|c| &c.data) {
            Some(ColumnData::Categorical { vocabulary, ids }) => Some((vocabulary, ids)),
            _ => None,
        }
    }

    /// Registers a category vocabulary. Re-registering identical labels is a
    /// no-op.
    pub fn register_vocabulary(
        &mut self,
        name: impl Into<String>,
        labels: Vec<String>,
    ) -> Result<(), FrameError> {
        let name = name.into();
        let mut seen = std::collections::HashSet::new();
        if labels.iter().any(|l| l.is_empty() || !seen.insert(l.as_str())) {
            return Err(FrameError::BadVocabulary(name));
        }
        match self.vocabularies.get(&name) {
            Some(existing) if *existing == labels => Ok(()),
            Some(_) => Err(FrameError::VocabularyConflict(name)),
            None => {
                self.vocabularies.insert(name, labels);
                Ok(())
            }
        }
    }

    pub fn push_column(&mut self, name: impl Into<String>, column: Column) -> Result<(), FrameError> {
        let name = name.into();
        if self.columns.contains_key(&name) || self.statics.contains_key(&name) {
            return Err(FrameError::DuplicateColumn(name));
        }
        if column.tag.is_static() {
            return Err(FrameError::TagMismatch {
                name,
                tag: column.tag,
            });
        }
        if column.data.len() != self.len() {
            return Err(FrameError::LengthMismatch {
                name,
                expected: self.len(),
                got: column.data.len(),
            });
        }
        match &column.data {
            ColumnData::Real(_) if column.tag.is_real() => {}
            ColumnData::Categorical { vocabulary, ids } if !column.tag.is_real() => {
                self.check_ids(vocabulary, ids.iter().flatten().copied())?;
            }
            _ => {
                return Err(FrameError::TagMismatch {
                    name,
                    tag: column.tag,
                })
            }
        }
        self.columns.insert(name, column);
        Ok(())
    }

    pub fn add_real(
        &mut self,
        name: impl Into<String>,
        tag: FeatureTag,
        unit: Option<&str>,
        values: Vec<f64>,
    ) -> Result<(), FrameError> {
        self.push_column(
            name,
            Column {
                tag,
                unit: unit.map(str::to_owned),
                data: ColumnData::Real(values),
            },
        )
    }

    pub fn add_categorical(
        &mut self,
        name: impl Into<String>,
        tag: FeatureTag,
        vocabulary: &str,
        ids: Vec<Option<u32>>,
    ) -> Result<(), FrameError> {
        self.push_column(
            name,
            Column {
                tag,
                unit: None,
                data: ColumnData::Categorical {
                    vocabulary: vocabulary.to_owned(),
                    ids,
                },
            },
        )
    }

    pub fn add_static(&mut self, name: impl Into<String>, field: StaticField) -> Result<(), FrameError> {
        let name = name.into();
        if self.columns.contains_key(&name) || self.statics.contains_key(&name) {
            return Err(FrameError::DuplicateColumn(name));
        }
        let fits = match &field.value {
            StaticValue::Real(_) => field.tag == FeatureTag::STATIC_REAL,
            StaticValue::Categorical { vocabulary, id } => {
                self.check_ids(vocabulary, std::iter::once(*id))?;
                field.tag == FeatureTag::STATIC_CATEGORICAL
            }
        };
        if !fits {
            return Err(FrameError::TagMismatch {
                name,
                tag: field.tag,
            });
        }
        self.statics.insert(name, field);
        Ok(())
    }

    pub fn add_static_real(&mut self, name: impl Into<String>, unit: Option<&str>, value: f64) -> Result<(), FrameError> {
        self.add_static(
            name,
            StaticField {
                tag: FeatureTag::STATIC_REAL,
                unit: unit.map(str::to_owned),
                value: StaticValue::Real(value),
            },
        )
    }

    /// Adds a static categorical, registering `label` in a vocabulary named
    /// after the field.
    pub fn add_static_category(&mut self, name: &str, label: &str) -> Result<(), FrameError> {
        if self.columns.contains_key(name) || self.statics.contains_key(name) {
            return Err(FrameError::DuplicateColumn(name.to_owned()));
        }
        if label.is_empty() {
            return Err(FrameError::BadVocabulary(name.to_owned()));
        }
        let vocab = self.vocabularies.entry(name.to_owned()).or_default();
        let id = match vocab.iter().position(|l| l == label) {
            Some(i) => i,
            None => {
                vocab.push(label.to_owned());
                vocab.len() - 1
            }
        };
        self.add_static(
            name,
            StaticField {
                tag: FeatureTag::STATIC_CATEGORICAL,
                unit: None,
                value: StaticValue::Categorical {
                    vocabulary: name.to_owned(),
                    id: id as u32,
                },
            },
        )
    }

    fn check_ids(&self, vocabulary: &str, ids: impl Iterator<Item = u32>) -> Result<(), FrameError> {
        let vocab = self
            .vocabularies
            .get(vocabulary)
            .ok_or_else(|| FrameError::UnknownVocabulary(vocabulary.to_owned()))?;
        for id in ids {
            if id as usize >= vocab.len() {
                return Err(FrameError::CategoryOutOfRange {
                    vocabulary: vocabulary.to_owned(),
                    id,
                });
            }
        }
        Ok(())
    }

    /// Replaces the tag of an existing column (kind must not change).
    pub fn retag(&mut self, name: &str, tag: FeatureTag) -> Result<(), FrameError> {
        let column = self
            .columns
            .get_mut(name)
            .ok_or_else(|| FrameError::UnknownColumn(name.to_owned()))?;
        if tag.kind() != column.tag.kind() || tag.is_static() {
            return Err(FrameError::TagMismatch {
                name: name.to_owned(),
                tag,
            });
        }
        column.tag = tag;
        Ok(())
    }

    /// Overwrites the values of an existing real column.
    pub fn replace_real(&mut self, name: &str, values: Vec<f64>) -> Result<(), FrameError> {
        let expected = self.len();
        let column = self
            .columns
            .get_mut(name)
            .ok_or_else(|| FrameError::UnknownColumn(name.to_owned()))?;
        if values.len() != expected {
            return Err(FrameError::LengthMismatch {
                name: name.to_owned(),
                expected,
                got: values.len(),
            });
        }
        match &mut column.data {
            ColumnData::Real(v) => {
                *v = values;
                Ok(())
            }
            ColumnData::Categorical { .. } => Err(FrameError::TagMismatch {
                name: name.to_owned(),
                tag: column.tag,
            }),
        }
    }

    /// Rows at the given (ascending) positions.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureFrame {
        FeatureFrame {
            index: rows.iter().map(|&r| self.index[r]).collect(),
            resolution_secs: self.resolution_secs,
            utc_offset_minutes: self.utc_offset_minutes,
            columns: self
                .columns
                .iter()
                .map(|(k, c)| {
                    (
                        k.clone(),
                        Column {
                            tag: c.tag,
                            unit: c.unit.clone(),
                            data: c.data.select(rows),
                        },
                    )
                })
                .collect(),
            statics: self.statics.clone(),
            vocabularies: self.vocabularies.clone(),
        }
    }

    pub fn position(&self, ts: DateTime<Utc>) -> Option<usize> {
        self.index.binary_search(&ts).ok()
    }

    pub fn local_datetime(&self, row: usize) -> NaiveDateTime {
        series::local_datetime(self.index[row], self.utc_offset_minutes)
    }

    pub fn local_date(&self, row: usize) -> NaiveDate {
        self.local_datetime(row).date()
    }

    /// Row positions grouped by local calendar day, in chronological order.
    pub fn day_groups(&self) -> BTreeMap<NaiveDate, Vec<usize>> {
        let mut days: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
        for row in 0..self.len() {
            days.entry(self.local_date(row)).or_default().push(row);
        }
        days
    }

    /// True when consecutive rows are exactly one resolution step apart.
    pub fn is_contiguous(&self) -> bool {
        self.index
            .windows(2)
            .all(|w| (w[1] - w[0]).num_seconds() == self.resolution_secs)
    }

    /// Real column as a [`TimeSeries`]; requires a contiguous index.
    pub fn series(&self, name: &str) -> Result<TimeSeries, FrameError> {
        let values = self
            .real(name)
            .ok_or_else(|| FrameError::UnknownColumn(name.to_owned()))?;
        if !self.is_contiguous() || self.is_empty() {
            return Err(FrameError::Format(format!(
                "column `{name}` is not on a contiguous index"
            )));
        }
        let unit = self.columns[name].unit.clone().unwrap_or_default();
        Ok(TimeSeries::new(self.index[0], self.resolution_secs, values.to_vec(), unit)
            .expect("non-empty contiguous column")
            .with_utc_offset(self.utc_offset_minutes))
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn static_unknown_tag_is_rejected() {
        assert!(matches!(
            FeatureTag::new(Temporal::Static, Knowledge::Unknown, ValueKind::Real),
            Err(FrameError::StaticUnknown)
        ));
        let json = r#"{"temporal":"static","knowledge":"unknown","kind":"real"}"#;
        assert!(serde_json::from_str::<FeatureTag>(json).is_err());
    }

    #[test]
    fn tag_labels_follow_the_feature_taxonomy() {
        assert_eq!(FeatureTag::UNKNOWN_REAL.to_string(), "Time Varying Unknown Reals");
        assert_eq!(
            FeatureTag::KNOWN_CATEGORICAL.to_string(),
            "Time Varying Known Categorical"
        );
        assert_eq!(FeatureTag::STATIC_CATEGORICAL.to_string(), "Static Categorical");
    }

    #[test]
    fn columns_must_match_index_length() {
        let mut f = hourly_frame(ymd(2018, 1, 1), 3);
        let err = f
            .add_real("x", FeatureTag::KNOWN_REAL, None, vec![1.0, 2.0])
            .unwrap_err();
        assert!(matches!(err, FrameError::LengthMismatch { .. }));
        f.add_real("x", FeatureTag::KNOWN_REAL, None, vec![1.0, 2.0, 3.0])
            .unwrap();
        assert!(matches!(
            f.add_real("x", FeatureTag::KNOWN_REAL, None, vec![1.0, 2.0, 3.0]),
            Err(FrameError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn categorical_ids_reference_registered_vocabulary() {
        let mut f = hourly_frame(ymd(2018, 1, 1), 2);
        assert!(matches!(
            f.add_categorical("w", FeatureTag::KNOWN_CATEGORICAL, "weather", vec![Some(0), None]),
            Err(FrameError::UnknownVocabulary(_))
        ));
        f.register_vocabulary("weather", vec!["a".into(), "b".into()])
            .unwrap();
        assert!(matches!(
            f.add_categorical("w", FeatureTag::KNOWN_CATEGORICAL, "weather", vec![Some(2), None]),
            Err(FrameError::CategoryOutOfRange { .. })
        ));
        assert!(matches!(
            f.add_categorical("w", FeatureTag::KNOWN_REAL, "weather", vec![Some(1), None]),
            Err(FrameError::TagMismatch { .. })
        ));
        f.add_categorical("w", FeatureTag::KNOWN_CATEGORICAL, "weather", vec![Some(1), None])
            .unwrap();
        assert_eq!(f.categorical("w").unwrap().1, &[Some(1), None]);
    }

    #[test]
    fn static_categories_register_their_vocabulary() {
        let mut f = hourly_frame(ymd(2018, 1, 1), 1);
        f.add_static_category("manufacturer", "BPSolar").unwrap();
        f.add_static_real("array_rating", Some("kW"), 5.0).unwrap();
        assert_eq!(f.vocabulary("manufacturer").unwrap(), &["BPSolar".to_string()]);
        assert!(f.add_static_real("array_rating", None, 1.0).is_err());
    }

    #[test]
    fn day_groups_follow_local_calendar() {
        let mut f = hourly_frame(ymd(2018, 1, 1), 48);
        f.utc_offset_minutes = 570;
        let days = f.day_groups();
        // 00:00 UTC is 09:30 local, so the first local day holds 15 rows.
        assert_eq!(days.values().next().unwrap().len(), 15);
        assert_eq!(days.values().map(Vec::len).sum::<usize>(), 48);
    }
}

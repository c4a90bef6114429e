//! Directory persistence for [`FeatureFrame`].
//!
//! Layout:
//! - `index.csv`: one `timestamp` column, RFC 3339 UTC.
//! - `columns.csv`: wide table, one column per time-varying feature. Reals
//!   use the shortest round-trip decimal form; categoricals store labels.
//!   Missing entries are empty cells.
//! - `meta.json`: tags, units, vocabularies, static fields, resolution in
//!   seconds and the site's UTC offset in minutes.

use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Column, ColumnData, FeatureFrame, FeatureTag, FrameError, StaticField, StaticValue};

pub const INDEX_FILE: &str = "index.csv";
pub const COLUMNS_FILE: &str = "columns.csv";
pub const META_FILE: &str = "meta.json";

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ColumnMeta {
    name: String,
    tag: FeatureTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StaticMetaValue {
    Real(Option<f64>),
    Category { vocabulary: String, label: String },
}

#[derive(Serialize, Deserialize)]
struct StaticMeta {
    name: String,
    tag: FeatureTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    value: StaticMetaValue,
}

#[derive(Serialize, Deserialize)]
struct FrameMeta {
    format_version: u32,
    resolution_secs: i64,
    utc_offset_minutes: i32,
    rows: usize,
    columns: Vec<ColumnMeta>,
    vocabularies: IndexMap<String, Vec<String>>,
    statics: Vec<StaticMeta>,
}

pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}

pub fn parse_real(cell: &str) -> Result<f64, FrameError> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>()
        .map_err(|_| FrameError::Format(format!("not a number: `{cell}`")))
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(cell: &str) -> Result<DateTime<Utc>, FrameError> {
    DateTime::parse_from_rfc3339(cell.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| FrameError::Format(format!("bad timestamp `{cell}`")))
}

/// Writes `frame` into `dir`, creating it if needed.
pub fn save(frame: &FeatureFrame, dir: &Path) -> Result<(), FrameError> {
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join(INDEX_FILE))?;
    w.write_record(["timestamp"])?;
    for ts in &frame.index {
        w.write_record([format_timestamp(*ts)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(COLUMNS_FILE))?;
    if !frame.columns.is_empty() {
        w.write_record(frame.columns.keys())?;
        for row in 0..frame.len() {
            let record: Vec<String> = frame
                .columns
                .values()
                .map(|c| match &c.data {
                    ColumnData::Real(v) => format_real(v[row]),
                    ColumnData::Categorical { vocabulary, ids } => ids[row]
                        .map(|id| frame.vocabularies[vocabulary][id as usize].clone())
                        .unwrap_or_default(),
                })
                .collect();
            w.write_record(&record)?;
        }
    }
    w.flush()?;

    let meta = FrameMeta {
        format_version: FORMAT_VERSION,
        resolution_secs: frame.resolution_secs,
        utc_offset_minutes: frame.utc_offset_minutes,
        rows: frame.len(),
        columns: frame
            .columns
            .iter()
            .map(|(name, c)| ColumnMeta {
                name: name.clone(),
                tag: c.tag,
                unit: c.unit.clone(),
                vocabulary: match &c.data {
                    ColumnData::Categorical { vocabulary, .. } => Some(vocabulary.clone()),
                    ColumnData::Real(_) => None,
                },
            })
            .collect(),
        vocabularies: frame.vocabularies.clone(),
        statics: frame
            .statics
            .iter()
            .map(|(name, s)| StaticMeta {
                name: name.clone(),
                tag: s.tag,
                unit: s.unit.clone(),
                value: match &s.value {
                    StaticValue::Real(x) => StaticMetaValue::Real((!x.is_nan()).then_some(*x)),
                    StaticValue::Categorical { vocabulary, id } => StaticMetaValue::Category {
                        vocabulary: vocabulary.clone(),
                        label: frame.vocabularies[vocabulary][*id as usize].clone(),
                    },
                },
            })
            .collect(),
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads a frame written by [`save`].
pub fn load(dir: &Path) -> Result<FeatureFrame, FrameError> {
    let meta: FrameMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(FrameError::Format(format!(
            "unsupported format version {}",
            meta.format_version
        )));
    }

    let mut r = csv::Reader::from_path(dir.join(INDEX_FILE))?;
    let mut index = Vec::with_capacity(meta.rows);
    for record in r.records() {
        index.push(parse_timestamp(&record?[0])?);
    }
    if index.len() != meta.rows {
        return Err(FrameError::Format(format!(
            "index has {} rows, meta declares {}",
            index.len(),
            meta.rows
        )));
    }

    let mut frame = FeatureFrame::new(index, meta.resolution_secs, meta.utc_offset_minutes)?;
    for (name, labels) in meta.vocabularies {
        frame.register_vocabulary(name, labels)?;
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::with_capacity(meta.rows); meta.columns.len()];
    if !meta.columns.is_empty() {
        let mut r = csv::Reader::from_path(dir.join(COLUMNS_FILE))?;
        let headers = r.headers()?.clone();
        let order: Vec<usize> = meta
            .columns
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c.name)
                    .ok_or_else(|| FrameError::UnknownColumn(c.name.clone()))
            })
            .collect::<Result<_, _>>()?;
        for record in r.records() {
            let record = record?;
            for (slot, &pos) in cells.iter_mut().zip(&order) {
                slot.push(record.get(pos).unwrap_or("").to_owned());
            }
        }
    }

    for (cm, raw) in meta.columns.into_iter().zip(cells) {
        let data = match &cm.vocabulary {
            None => ColumnData::Real(raw.iter().map(|c| parse_real(c)).collect::<Result<_, _>>()?),
            Some(vocab) => {
                let labels = frame
                    .vocabulary(vocab)
                    .ok_or_else(|| FrameError::UnknownVocabulary(vocab.clone()))?;
                let ids = raw
                    .iter()
                    .map(|c| {
                        if c.is_empty() {
                            Ok(None)
                        } else {
                            labels
                                .iter()
                                .position(|l| l == c)
                                .map(|i| Some(i as u32))
                                .ok_or_else(|| FrameError::Format(format!("unknown category `{c}`")))
                        }
                    })
                    .collect::<Result<_, _>>()?;
                ColumnData::Categorical {
                    vocabulary: vocab.clone(),
                    ids,
                }
            }
        };
        frame.push_column(
            cm.name,
            Column {
                tag: cm.tag,
                unit: cm.unit,
                data,
            },
        )?;
    }

    for sm in meta.statics {
        let value = match sm.value {
            StaticMetaValue::Real(x) => StaticValue::Real(x.unwrap_or(f64::NAN)),
            StaticMetaValue::Category { vocabulary, label } => {
                let id = frame
                    .vocabulary(&vocabulary)
                    .and_then(|v| v.iter().position(|l| *l == label))
                    .ok_or_else(|| FrameError::Format(format!("unknown category `{label}`")))?;
                StaticValue::Categorical {
                    vocabulary,
                    id: id as u32,
                }
            }
        };
        frame.add_static(
            sm.name,
            StaticField {
                tag: sm.tag,
                unit: sm.unit,
                value,
            },
        )?;
    }
    Ok(frame)
}

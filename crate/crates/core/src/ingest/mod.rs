//! Raw plant/meteorology CSV ingestion, cleaning and hourly resampling.

mod clean;
mod resample;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{FeatureFrame, FeatureTag, FrameError};
use crate::series::{self, SeriesError, TimeSeries, MISSING};

pub use clean::{
    clean, screen_inconsistent_hours, CleaningLog, ColumnLog, FlaggedHour, GapRun, ScreenLog,
    MAX_FILL_GAP, SCREEN_HISTORY,
};
pub use resample::resample_hourly;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: malformed timestamp `{value}`")]
    MalformedTimestamp { line: u64, value: String },
    #[error("schema maps `{raw}` to unknown field `{canonical}`")]
    UnknownField { raw: String, canonical: String },
    #[error("plant {plant}: timestamps not strictly increasing at line {line}")]
    NonMonotonic { plant: String, line: u64 },
    #[error("plant {0} has no records")]
    UnknownPlant(String),
    #[error("timestamp {0} is off the sampling grid")]
    OffGrid(DateTime<Utc>),
    #[error("invalid bounds for {0}: min must be below max")]
    BadBounds(Field),
    #[error("array rating must be positive, got {0}")]
    BadRating(f64),
    #[error("resolution of {0}s does not divide one hour")]
    BadResolution(i64),
    #[error("series does not start on an hour boundary")]
    MisalignedStart,
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Canonical measurement columns of a plant export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Power,
    Ghi,
    Dhi,
    Temperature,
    Humidity,
    Rainfall,
    Zenith,
    Azimuth,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::Power,
        Field::Ghi,
        Field::Dhi,
        Field::Temperature,
        Field::Humidity,
        Field::Rainfall,
        Field::Zenith,
        Field::Azimuth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Power => "power",
            Field::Ghi => "ghi",
            Field::Dhi => "dhi",
            Field::Temperature => "temperature",
            Field::Humidity => "humidity",
            Field::Rainfall => "rainfall",
            Field::Zenith => "zenith",
            Field::Azimuth => "azimuth",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Field::Power => "kW",
            Field::Ghi | Field::Dhi => "W/m2",
            Field::Temperature => "degC",
            Field::Humidity => "%",
            Field::Rainfall => "mm",
            Field::Zenith | Field::Azimuth => "deg",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub timestamp: DateTime<Utc>,
    pub plant_id: String,
    values: [f64; 8],
}

impl RawRecord {
    pub fn new(timestamp: DateTime<Utc>, plant_id: impl Into<String>) -> Self {
        Self {
            timestamp,
            plant_id: plant_id.into(),
            values: [MISSING; 8],
        }
    }

    pub fn get(&self, field: Field) -> f64 {
        self.values[field.slot()]
    }

    pub fn set(&mut self, field: Field, value: f64) {
        self.values[field.slot()] = value;
    }

    pub fn with(mut self, field: Field, value: f64) -> Self {
        self.set(field, value);
        self
    }
}

/// Parsed export rows; timestamps strictly increase within each plant.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecordSet {
    pub records: Vec<RawRecord>,
    /// Columns that were present in the source file.
    pub fields: BTreeSet<Field>,
    pub utc_offset_minutes: i32,
}

impl RawRecordSet {
    pub fn new(records: Vec<RawRecord>, fields: BTreeSet<Field>, utc_offset_minutes: i32) -> Result<Self, IngestError> {
        let set = Self {
            records,
            fields,
            utc_offset_minutes,
        };
        for plant in set.plants() {
            let rows = set.plant_rows(&plant);
            if let Some(w) = rows.windows(2).find(|w| set.records[w[1]].timestamp <= set.records[w[0]].timestamp) {
                return Err(IngestError::NonMonotonic {
                    plant,
                    line: w[1] as u64 + 2,
                });
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Plant ids in order of first appearance.
    pub fn plants(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for r in &self.records {
            if !seen.contains(&r.plant_id) {
                seen.push(r.plant_id.clone());
            }
        }
        seen
    }

    pub fn plant_rows(&self, plant: &str) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].plant_id == plant)
            .collect()
    }

    /// One column of one plant on a regular grid. Rows absent from the
    /// export become missing entries.
    pub fn series(&self, plant: &str, field: Field, resolution_secs: i64) -> Result<TimeSeries, IngestError> {
        let rows = self.plant_rows(plant);
        let first = rows
            .first()
            .map(|&r| self.records[r].timestamp)
            .ok_or_else(|| IngestError::UnknownPlant(plant.to_owned()))?;
        let last = self.records[*rows.last().unwrap()].timestamp;
        let len = ((last - first).num_seconds() / resolution_secs) as usize + 1;
        let mut values = vec![MISSING; len];
        for &r in &rows {
            let rec = &self.records[r];
            let offset = (rec.timestamp - first).num_seconds();
            if offset % resolution_secs != 0 {
                return Err(IngestError::OffGrid(rec.timestamp));
            }
            values[(offset / resolution_secs) as usize] = rec.get(field);
        }
        Ok(TimeSeries::new(first, resolution_secs, values, field.unit())?
            .with_utc_offset(self.utc_offset_minutes))
    }

    /// Sampling step most common between consecutive rows of `plant`.
    pub fn native_resolution(&self, plant: &str) -> Option<i64> {
        let rows = self.plant_rows(plant);
        let mut counts: IndexMap<i64, usize> = IndexMap::new();
        for w in rows.windows(2) {
            let step = (self.records[w[1]].timestamp - self.records[w[0]].timestamp).num_seconds();
            *counts.entry(step).or_default() += 1;
        }
        counts.into_iter().max_by_key(|(_, c)| *c).map(|(s, _)| s)
    }
}

/// Maps raw CSV headers to canonical field names. Headers already using a
/// canonical name need no entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CsvSchema {
    pub mapping: IndexMap<String, String>,
}

impl CsvSchema {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let schema: CsvSchema = serde_json::from_str(text)?;
        for (raw, canonical) in &schema.mapping {
            if canonical != "timestamp" && canonical != "plant_id" && Field::from_name(canonical).is_none() {
                return Err(IngestError::UnknownField {
                    raw: raw.clone(),
                    canonical: canonical.clone(),
                });
            }
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Reading options that are not part of the file itself.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Plant id for files without a `plant_id` column.
    pub default_plant: String,
    /// Offset applied to naive (wall-clock) timestamps.
    pub utc_offset_minutes: i32,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            default_plant: "PV-01".into(),
            utc_offset_minutes: 0,
        }
    }
}

fn parse_timestamp(cell: &str, utc_offset_minutes: i32) -> Option<DateTime<Utc>> {
    let cell = cell.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(cell) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(cell, fmt).ok())
        .map(|naive| series::local_to_utc(naive, utc_offset_minutes))
}

pub fn parse_csv(path: &Path, schema: &CsvSchema, opts: &ParseOptions) -> Result<RawRecordSet, IngestError> {
    parse_csv_reader(fs::File::open(path)?, schema, opts)
}

/// Parses an export. Unparseable or blank measurement cells become missing
/// entries; row count is preserved.
pub fn parse_csv_reader<R: Read>(
    reader: R,
    schema: &CsvSchema,
    opts: &ParseOptions,
) -> Result<RawRecordSet, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |raw: &str| headers.iter().position(|h| h == raw);

    for raw in schema.mapping.keys() {
        if find(raw).is_none() {
            return Err(IngestError::MissingColumn(raw.clone()));
        }
    }
    let canonical_of = |h: &str| -> String { schema.mapping.get(h).cloned().unwrap_or_else(|| h.to_owned()) };
    let mut ts_col = None;
    let mut plant_col = None;
    let mut field_cols: Vec<(usize, Field)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        match canonical_of(h).as_str() {
            "timestamp" => ts_col = Some(i),
            "plant_id" => plant_col = Some(i),
            other => {
                if let Some(f) = Field::from_name(other) {
                    field_cols.push((i, f));
                }
            }
        }
    }
    let ts_col = ts_col.ok_or_else(|| IngestError::MissingColumn("timestamp".into()))?;

    let mut records = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let line = n as u64 + 2;
        let cell = row.get(ts_col).unwrap_or("");
        let timestamp = parse_timestamp(cell, opts.utc_offset_minutes).ok_or_else(|| IngestError::MalformedTimestamp {
            line,
            value: cell.to_owned(),
        })?;
        let plant = plant_col
            .and_then(|c| row.get(c))
            .filter(|p| !p.is_empty())
            .unwrap_or(&opts.default_plant);
        let mut rec = RawRecord::new(timestamp, plant);
        for &(col, field) in &field_cols {
            let v = row.get(col).and_then(|c| c.parse::<f64>().ok()).filter(|v| v.is_finite());
            rec.set(field, v.unwrap_or(MISSING));
        }
        records.push(rec);
    }
    let fields = field_cols.into_iter().map(|(_, f)| f).collect();
    RawRecordSet::new(records, fields, opts.utc_offset_minutes)
}

/// Writes records in the canonical export layout read by [`parse_csv`].
pub fn write_csv<W: std::io::Write>(set: &RawRecordSet, writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    let fields: Vec<Field> = set.fields.iter().copied().collect();
    let mut header = vec!["timestamp".to_owned(), "plant_id".to_owned()];
    header.extend(fields.iter().map(|f| f.name().to_owned()));
    w.write_record(&header)?;
    for r in &set.records {
        let local = series::local_datetime(r.timestamp, set.utc_offset_minutes);
        let mut row = vec![local.format("%Y-%m-%d %H:%M:%S").to_string(), r.plant_id.clone()];
        row.extend(fields.iter().map(|&f| crate::frame::io::format_real(r.get(f))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-column physical limits used to clamp out-of-range readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalBounds {
    limits: IndexMap<Field, (f64, f64)>,
}

impl PhysicalBounds {
    pub fn new(limits: impl IntoIterator<Item = (Field, (f64, f64))>) -> Result<Self, IngestError> {
        let limits: IndexMap<Field, (f64, f64)> = limits.into_iter().collect();
        for (&f, &(lo, hi)) in &limits {
            if !(lo < hi) {
                return Err(IngestError::BadBounds(f));
            }
        }
        Ok(Self { limits })
    }

    /// Limits for a plant of the given rating: power [0, rating] kW,
    /// irradiance [0, 1500] W/m², humidity [0, 100] %, temperature
    /// [-10, 60] °C, daily rainfall [0, 500] mm, zenith [0, 180]°,
    /// azimuth [0, 360]°.
    pub fn for_rating(array_rating: f64) -> Result<Self, IngestError> {
        if !(array_rating > 0.0) {
            return Err(IngestError::BadRating(array_rating));
        }
        Self::new([
            (Field::Power, (0.0, array_rating)),
            (Field::Ghi, (0.0, 1500.0)),
            (Field::Dhi, (0.0, 1500.0)),
            (Field::Humidity, (0.0, 100.0)),
            (Field::Temperature, (-10.0, 60.0)),
            (Field::Rainfall, (0.0, 500.0)),
            (Field::Zenith, (0.0, 180.0)),
            (Field::Azimuth, (0.0, 360.0)),
        ])
    }

    pub fn get(&self, field: Field) -> Option<(f64, f64)> {
        self.limits.get(&field).copied()
    }
}

/// Static properties of one PV plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub plant_id: String,
    pub manufacturer: String,
    /// kW
    pub array_rating: f64,
    pub pv_technology: String,
    pub array_structure: String,
    pub install_year: i32,
}

impl PlantSpec {
    pub fn new(
        plant_id: &str,
        manufacturer: &str,
        array_rating: f64,
        pv_technology: &str,
        array_structure: &str,
        install_year: i32,
    ) -> Result<Self, IngestError> {
        if !(array_rating > 0.0) {
            return Err(IngestError::BadRating(array_rating));
        }
        Ok(Self {
            plant_id: plant_id.to_owned(),
            manufacturer: manufacturer.to_owned(),
            array_rating,
            pv_technology: pv_technology.to_owned(),
            array_structure: array_structure.to_owned(),
            install_year,
        })
    }

    /// The thirteen DKASC Alice Springs plants used in the case studies.
    pub fn dkasc_plants() -> Vec<PlantSpec> {
        [
            ("PV-01", "BPSolar", 5.0, "poly-Si", 2008),
            ("PV-02", "Kaneka", 5.2, "Amorphoussilicon", 2008),
            ("PV-03", "Solibro", 5.8, "CIGS", 2017),
            ("PV-04", "SunPower", 5.0, "mono-Si", 2009),
            ("PV-05", "BPSolar", 5.1, "poly-Si", 2008),
            ("PV-06", "BPSolar", 5.3, "mono-Si", 2008),
            ("PV-07", "Trina", 5.4, "mono-Si", 2009),
            ("PV-08", "Kyocera", 2.0, "poly-Si", 2008),
            ("PV-09", "BPSolar", 6.3, "poly-Si", 2008),
            ("PV-10", "SunPower", 5.0, "mono-Si", 2011),
            ("PV-11", "Sungrid", 5.0, "mono-Si", 2010),
            ("PV-12", "Sungrid", 4.9, "poly-Si", 2010),
            ("PV-13", "EvergreenSolar", 16.8, "poly-Si", 2010),
        ]
        .into_iter()
        .map(|(id, m, r, t, y)| PlantSpec::new(id, m, r, t, "Fixed", y).expect("positive rating"))
        .collect()
    }
}

/// Hourly raw frame of one plant: cleaned, screened and resampled.
///
/// Measurement columns are tagged time-varying unknown reals, solar angles
/// time-varying known reals; the feature builder re-tags according to the
/// meteorology availability mode.
pub fn hourly_frame(
    records: &RawRecordSet,
    plant: &PlantSpec,
) -> Result<(FeatureFrame, CleaningLog, ScreenLog), IngestError> {
    let bounds = PhysicalBounds::for_rating(plant.array_rating)?;
    let only_plant = RawRecordSet {
        records: records
            .plant_rows(&plant.plant_id)
            .into_iter()
            .map(|r| records.records[r].clone())
            .collect(),
        fields: records.fields.clone(),
        utc_offset_minutes: records.utc_offset_minutes,
    };
    if only_plant.is_empty() {
        return Err(IngestError::UnknownPlant(plant.plant_id.clone()));
    }
    let (cleaned, log) = clean(&only_plant, &bounds);
    let resolution = cleaned.native_resolution(&plant.plant_id).unwrap_or(3600);
    let mut hourly: IndexMap<Field, TimeSeries> = IndexMap::new();
    for &field in &cleaned.fields {
        let raw = cleaned.series(&plant.plant_id, field, resolution)?;
        hourly.insert(field, trim_to_hour(raw).and_then(|s| resample_hourly(&s))?);
    }
    let template = hourly
        .get(&Field::Power)
        .ok_or_else(|| IngestError::MissingColumn("power".into()))?
        .clone();

    let mut power = template.values().to_vec();
    let mut ghi = hourly.get(&Field::Ghi).map(|s| s.values().to_vec()).unwrap_or_else(|| vec![MISSING; power.len()]);
    let mut dhi = hourly.get(&Field::Dhi).map(|s| s.values().to_vec()).unwrap_or_else(|| vec![MISSING; power.len()]);
    let local: Vec<NaiveDateTime> = template
        .timestamps()
        .into_iter()
        .map(|t| series::local_datetime(t, template.utc_offset_minutes()))
        .collect();
    let screen = screen_inconsistent_hours(&mut power, &mut ghi, &mut dhi, &local, plant.array_rating);

    let mut frame = FeatureFrame::over(&template);
    for (field, s) in &hourly {
        let values = match field {
            Field::Power => power.clone(),
            Field::Ghi => ghi.clone(),
            Field::Dhi => dhi.clone(),
            _ => s.values().to_vec(),
        };
        let tag = match field {
            Field::Zenith | Field::Azimuth => FeatureTag::KNOWN_REAL,
            _ => FeatureTag::UNKNOWN_REAL,
        };
        frame.add_real(field.name(), tag, Some(field.unit()), values)?;
    }
    Ok((frame, log, screen))
}

/// Drops leading samples before the first (local) hour boundary.
fn trim_to_hour(series: TimeSeries) -> Result<TimeSeries, IngestError> {
    let res = series.resolution_secs();
    if res <= 0 || 3600 % res != 0 {
        return Err(IngestError::BadResolution(res));
    }
    let skip = (0..series.len())
        .find(|&i| resample::on_local_hour(series.timestamp(i), series.utc_offset_minutes()))
        .ok_or(IngestError::MisalignedStart)?;
    if skip == 0 {
        return Ok(series);
    }
    let start = series.timestamp(skip);
    let offset = series.utc_offset_minutes();
    Ok(TimeSeries::new(start, res, series.values()[skip..].to_vec(), series.unit())?.with_utc_offset(offset))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV3: &str = "timestamp,Active_Power,Global_Horizontal_Radiation\n\
        2018-01-01 10:00:00,1.5,600\n\
        2018-01-01 10:05:00,,610\n\
        2018-01-01 10:10:00,1.7,oops\n";

    fn schema() -> CsvSchema {
        CsvSchema::from_json(r#"{"Active_Power":"power","Global_Horizontal_Radiation":"ghi"}"#).unwrap()
    }

    #[test]
    fn parses_rows_and_marks_blank_cells_missing() {
        let set = parse_csv_reader(CSV3.as_bytes(), &schema(), &ParseOptions::default()).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.records[0].get(Field::Power), 1.5);
        assert!(set.records[1].get(Field::Power).is_nan());
        assert!(set.records[2].get(Field::Ghi).is_nan());
        assert!(set.records[0].get(Field::Temperature).is_nan());
        assert_eq!(set.fields, [Field::Power, Field::Ghi].into_iter().collect());
        assert_eq!(set.records[0].plant_id, "PV-01");
    }

    #[test]
    fn schema_column_absent_from_file_is_an_error() {
        let schema = CsvSchema::from_json(
            r#"{"Active_Power":"power","Global_Horizontal_Radiation":"ghi","Diffuse_Horizontal_Radiation":"dhi"}"#,
        )
        .unwrap();
        let err = parse_csv_reader(CSV3.as_bytes(), &schema, &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "Diffuse_Horizontal_Radiation"));
    }

    #[test]
    fn malformed_timestamp_reports_line() {
        let text = "timestamp,power\n2018-01-01 10:00:00,1\nyesterday,2\n";
        let err = parse_csv_reader(text.as_bytes(), &CsvSchema::default(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::MalformedTimestamp { line: 3, .. }));
    }

    #[test]
    fn naive_timestamps_use_site_offset() {
        let opts = ParseOptions {
            utc_offset_minutes: 570,
            ..Default::default()
        };
        let text = "timestamp,power\n2018-01-01 09:30:00,1\n2018-01-01T00:05:00Z,2\n";
        let set = parse_csv_reader(text.as_bytes(), &CsvSchema::default(), &opts).unwrap();
        assert_eq!(set.records[0].timestamp.to_rfc3339(), "2018-01-01T00:00:00+00:00");
        assert_eq!(set.records[1].timestamp.to_rfc3339(), "2018-01-01T00:05:00+00:00");
    }

    #[test]
    fn non_increasing_timestamps_are_rejected() {
        let text = "timestamp,power\n2018-01-01 10:00:00,1\n2018-01-01 10:00:00,2\n";
        let err = parse_csv_reader(text.as_bytes(), &CsvSchema::default(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::NonMonotonic { .. }));
    }

    #[test]
    fn unknown_schema_target_is_rejected() {
        assert!(matches!(
            CsvSchema::from_json(r#"{"x":"wind_speed"}"#),
            Err(IngestError::UnknownField { .. })
        ));
    }

    #[test]
    fn bounds_require_min_below_max() {
        assert!(PhysicalBounds::new([(Field::Ghi, (10.0, 10.0))]).is_err());
        assert!(PhysicalBounds::for_rating(0.0).is_err());
        assert_eq!(PhysicalBounds::for_rating(5.0).unwrap().get(Field::Power), Some((0.0, 5.0)));
    }

    #[test]
    fn dkasc_plant_table() {
        let plants = PlantSpec::dkasc_plants();
        assert_eq!(plants.len(), 13);
        assert_eq!(plants[12].array_rating, 16.8);
        assert_eq!(plants[2].pv_technology, "CIGS");
        assert!(PlantSpec::new("x", "m", -1.0, "t", "Fixed", 2010).is_err());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let set = parse_csv_reader(CSV3.as_bytes(), &schema(), &ParseOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&set, &mut buf).unwrap();
        let again = parse_csv_reader(buf.as_slice(), &CsvSchema::default(), &ParseOptions::default()).unwrap();
        assert_eq!(again.len(), 3);
        assert_eq!(again.records[2].get(Field::Power), 1.7);
    }
}

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::{Field, PhysicalBounds, RawRecordSet};
use crate::features::{classify_weather, clearness_index, WeatherType};

/// Longest interior run of missing samples filled by interpolation
/// (6 five-minute samples = 30 minutes).
pub const MAX_FILL_GAP: usize = 6;

/// Same-hour, same-weather days averaged when replacing a screened value.
pub const SCREEN_HISTORY: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRun {
    pub plant: String,
    pub start: DateTime<Utc>,
    pub len: usize,
    /// Gap touches the first or last record of the plant.
    pub boundary: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLog {
    pub clamped_low: usize,
    pub clamped_high: usize,
    pub filled: usize,
    pub unfilled: Vec<GapRun>,
}

/// Per-column counts of clamps and fills, plus gaps left missing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningLog {
    pub columns: BTreeMap<Field, ColumnLog>,
    /// Present columns without bounds; filled but not clamped.
    pub unbounded: Vec<Field>,
}

impl CleaningLog {
    pub fn total_clamped(&self) -> usize {
        self.columns.values().map(|c| c.clamped_low + c.clamped_high).sum()
    }

    pub fn total_filled(&self) -> usize {
        self.columns.values().map(|c| c.filled).sum()
    }
}

/// Clamps out-of-bounds readings and linearly interpolates short interior
/// gaps. Longer gaps and gaps at either end stay missing and are logged.
///
/// Idempotent: cleaning a cleaned set changes nothing.
pub fn clean(records: &RawRecordSet, bounds: &PhysicalBounds) -> (RawRecordSet, CleaningLog) {
    let mut out = records.clone();
    let mut log = CleaningLog::default();
    let plants = out.plants();
    for &field in &records.fields {
        let entry = log.columns.entry(field).or_default();
        let limits = bounds.get(field);
        if limits.is_none() {
            log.unbounded.push(field);
        }
        for plant in &plants {
            let rows = out.plant_rows(plant);
            if let Some((lo, hi)) = limits {
                for &r in &rows {
                    let v = out.records[r].get(field);
                    if v < lo {
                        out.records[r].set(field, lo);
                        entry.clamped_low += 1;
                    } else if v > hi {
                        out.records[r].set(field, hi);
                        entry.clamped_high += 1;
                    }
                }
            }
            fill_gaps(&mut out, &rows, field, plant, entry);
        }
    }
    (out, log)
}

fn fill_gaps(set: &mut RawRecordSet, rows: &[usize], field: Field, plant: &str, log: &mut ColumnLog) {
    let mut i = 0;
    while i < rows.len() {
        if !set.records[rows[i]].get(field).is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < rows.len() && set.records[rows[i]].get(field).is_nan() {
            i += 1;
        }
        let len = i - start;
        let boundary = start == 0 || i == rows.len();
        if boundary || len > MAX_FILL_GAP {
            log.unfilled.push(GapRun {
                plant: plant.to_owned(),
                start: set.records[rows[start]].timestamp,
                len,
                boundary,
            });
            continue;
        }
        let (a, b) = (&set.records[rows[start - 1]], &set.records[rows[i]]);
        let (ta, tb) = (a.timestamp, b.timestamp);
        let (va, vb) = (a.get(field), b.get(field));
        let span = (tb - ta).num_milliseconds() as f64;
        for &r in &rows[start..i] {
            let frac = (set.records[r].timestamp - ta).num_milliseconds() as f64 / span;
            set.records[r].set(field, va + (vb - va) * frac);
        }
        log.filled += len;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenRule {
    /// Power above 5 % of rating while GHI is below 5 W/m²; the irradiance
    /// readings are replaced.
    PowerWithoutIrradiance,
    /// Power at most 5 % of rating while GHI is at least 5 W/m², between
    /// 10:00 and 14:00 local time; the power reading is replaced.
    IrradianceWithoutPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedHour {
    pub row: usize,
    pub local_time: NaiveDateTime,
    pub rule: ScreenRule,
    pub weather: WeatherType,
    /// Number of earlier same-hour, same-weather values averaged; zero
    /// means no reference was found and the value was set missing.
    pub references: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreenLog {
    pub flagged: Vec<FlaggedHour>,
}

/// Flags hours where power and irradiance disagree and replaces the
/// suspect reading with the mean of the most recent [`SCREEN_HISTORY`]
/// values at the same local hour on days of the same weather type.
///
/// Day weather comes from the clearness index of the unflagged hours.
pub fn screen_inconsistent_hours(
    power: &mut [f64],
    ghi: &mut [f64],
    dhi: &mut [f64],
    local: &[NaiveDateTime],
    array_rating: f64,
) -> ScreenLog {
    let n = power.len();
    let threshold = 0.05 * array_rating;
    let mut rule = vec![None; n];
    for i in 0..n {
        let (p, g) = (power[i], ghi[i]);
        if p.is_nan() || g.is_nan() {
            continue;
        }
        let hour = local[i].hour();
        if p > threshold && g < 5.0 {
            rule[i] = Some(ScreenRule::PowerWithoutIrradiance);
        } else if (10..14).contains(&hour) && p <= threshold && g >= 5.0 {
            rule[i] = Some(ScreenRule::IrradianceWithoutPower);
        }
    }

    let mut day_rows: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
    for (i, t) in local.iter().enumerate() {
        day_rows.entry(t.date()).or_default().push(i);
    }
    let mut weather_of_day: BTreeMap<NaiveDate, WeatherType> = BTreeMap::new();
    for (day, rows) in &day_rows {
        let usable: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&r| rule[r] != Some(ScreenRule::PowerWithoutIrradiance) && !ghi[r].is_nan() && !dhi[r].is_nan())
            .collect();
        let g: Vec<f64> = usable.iter().map(|&r| ghi[r]).collect();
        let d: Vec<f64> = usable.iter().map(|&r| dhi[r]).collect();
        let w = clearness_index(&d, &g)
            .ok()
            .and_then(|k| classify_weather(k).ok())
            .unwrap_or(WeatherType::OvercastRainy);
        weather_of_day.insert(*day, w);
    }

    let mut log = ScreenLog::default();
    for i in 0..n {
        let Some(r) = rule[i] else { continue };
        let day = local[i].date();
        let hour = local[i].hour();
        let weather = weather_of_day[&day];
        let mut refs: Vec<usize> = Vec::new();
        for (_, rows) in day_rows.range(..day).rev() {
            if refs.len() == SCREEN_HISTORY {
                break;
            }
            if weather_of_day[&local[rows[0]].date()] != weather {
                continue;
            }
            if let Some(&j) = rows.iter().find(|&&j| local[j].hour() == hour && rule[j].is_none()) {
                refs.push(j);
            }
        }
        let avg = |col: &[f64]| -> f64 {
            let vals: Vec<f64> = refs.iter().map(|&j| col[j]).filter(|v| !v.is_nan()).collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        match r {
            ScreenRule::PowerWithoutIrradiance => {
                ghi[i] = avg(ghi);
                dhi[i] = avg(dhi);
            }
            ScreenRule::IrradianceWithoutPower => power[i] = avg(power),
        }
        log.flagged.push(FlaggedHour {
            row: i,
            local_time: local[i],
            rule: r,
            weather,
            references: refs.len(),
        });
    }
    log
}

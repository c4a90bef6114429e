use chrono::{DateTime, Timelike, Utc};

use super::IngestError;
use crate::series::{self, TimeSeries, MISSING};

pub(super) fn on_local_hour(ts: DateTime<Utc>, utc_offset_minutes: i32) -> bool {
    let local = series::local_datetime(ts, utc_offset_minutes);
    local.minute() == 0 && local.second() == 0 && ts.timestamp_subsec_nanos() == 0
}

/// Averages sub-hourly samples into hourly values.
///
/// Each output is the mean of the hour's present samples, so mean power in
/// kW equals energy in kWh over the hour. Hours with more than half of
/// their samples missing become missing. A trailing partial hour counts its
/// absent samples as missing.
pub fn resample_hourly(series: &TimeSeries) -> Result<TimeSeries, IngestError> {
    let res = series.resolution_secs();
    if 3600 % res != 0 {
        return Err(IngestError::BadResolution(res));
    }
    if !on_local_hour(series.start(), series.utc_offset_minutes()) {
        return Err(IngestError::MisalignedStart);
    }
    let per_hour = (3600 / res) as usize;
    let values: Vec<f64> = series
        .values()
        .chunks(per_hour)
        .map(|chunk| {
            let present: Vec<f64> = chunk.iter().copied().filter(|v| !v.is_nan()).collect();
            let missing = per_hour - present.len();
            if 2 * missing > per_hour {
                MISSING
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        })
        .collect();
    Ok(TimeSeries::new(series.start(), 3600, values, series.unit())?.with_utc_offset(series.utc_offset_minutes()))
}

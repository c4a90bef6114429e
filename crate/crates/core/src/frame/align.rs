use super::{Column, FeatureFrame, FrameError};

/// Joins frames on the intersection of their timestamps.
///
/// All frames must share resolution and UTC offset. Column name collisions
/// are rejected; static fields and vocabularies present in several frames
/// must agree exactly.
pub fn align(frames: &[FeatureFrame]) -> Result<FeatureFrame, FrameError> {
    let first = frames.first().ok_or(FrameError::NoFrames)?;
    if frames.iter().any(|f| f.resolution_secs != first.resolution_secs) {
        return Err(FrameError::Incompatible("resolution"));
    }
    if frames
        .iter()
        .any(|f| f.utc_offset_minutes != first.utc_offset_minutes)
    {
        return Err(FrameError::Incompatible("UTC offset"));
    }

    let mut index = first.index.clone();
    for frame in &frames[1..] {
        index.retain(|ts| frame.index.binary_search(ts).is_ok());
    }
    if index.is_empty() {
        return Err(FrameError::EmptyIntersection);
    }

    let mut out = FeatureFrame::new(index, first.resolution_secs, first.utc_offset_minutes)?;
    for frame in frames {
        for (name, labels) in &frame.vocabularies {
            out.register_vocabulary(name.clone(), labels.clone())?;
        }
    }
    for frame in frames {
        let rows: Vec<usize> = out
            .index
            .iter()
            .map(|ts| frame.position(*ts).expect("timestamp in intersection"))
            .collect();
        for (name, column) in &frame.columns {
            out.push_column(
                name.clone(),
                Column {
                    tag: column.tag,
                    unit: column.unit.clone(),
                    data: column.data.select(&rows),
                },
            )?;
        }
        for (name, field) in &frame.statics {
            match out.statics.get(name) {
                Some(existing) if existing == field => {}
                Some(_) => return Err(FrameError::DuplicateColumn(name.clone())),
                None => out.add_static(name.clone(), field.clone())?,
            }
        }
    }
    Ok(out)
}

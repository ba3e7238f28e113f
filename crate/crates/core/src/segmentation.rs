//! Splitting series around the distraction and cutting out route features.

use crate::error::{Error, Result};
use crate::model::{FeatureLabel, SegmentMarkers, SegmentedSeries, Series};

/// Index of the first sample at or after `t` (the series length if none).
pub fn first_index_at_or_after(times: &[f64], t: f64) -> usize {
    times.partition_point(|&x| x < t)
}

/// Partition by the half-open rule: before `< start <=` during `< end <=` after.
pub fn split_segments(series: &Series, markers: &SegmentMarkers) -> Result<SegmentedSeries> {
    markers.validate()?;
    let start = first_index_at_or_after(series.times(), markers.distraction_start);
    let end = first_index_at_or_after(series.times(), markers.distraction_end);
    split_at(series, start, end)
}

/// Partition at sample indices: `[0, start)`, `[start, end)`, `[end, n)`.
pub fn split_at(series: &Series, start: usize, end: usize) -> Result<SegmentedSeries> {
    let n = series.len();
    let degenerate = |what: &str| {
        Error::DegenerateSegment(format!(
            "empty {what} segment in {} ({n} samples, split at {start} and {end})",
            series.channel()
        ))
    };
    if start == 0 {
        return Err(degenerate("before"));
    }
    if end <= start {
        return Err(degenerate("during"));
    }
    if end >= n {
        return Err(degenerate("after"));
    }
    Ok(SegmentedSeries {
        before: series.slice(0..start)?,
        during: series.slice(start..end)?,
        after: series.slice(end..n)?,
    })
}

/// Samples inside the first feature carrying `label`, using `[start, end)`.
pub fn extract_feature(series: &Series, markers: &SegmentMarkers, label: FeatureLabel) -> Result<Series> {
    let feature = markers.feature(label).ok_or(Error::FeatureNotAnnotated(label))?;
    let lo = first_index_at_or_after(series.times(), feature.start);
    let hi = first_index_at_or_after(series.times(), feature.end);
    if lo >= hi {
        return Err(Error::DegenerateSegment(format!(
            "{label} feature [{}, {}) holds no samples of {}",
            feature.start,
            feature.end,
            series.channel()
        )));
    }
    series.slice(lo..hi)
}

//! Session files, clock synchronisation and outlier cleaning.
//!
//! A session lives in two files: a CSV with a `t` column followed by one
//! column per channel, and a JSON sidecar with participant, session type and
//! distraction markers. The sidecar sits next to the CSV with a `.json`
//! extension.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FeatureLabel, RouteFeature, SegmentMarkers, Series, Session, SessionType, STEP_TOLERANCE};

/// JSON sidecar layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub participant_id: String,
    pub session_type: SessionType,
    pub distraction_start_s: Option<f64>,
    pub distraction_end_s: Option<f64>,
    #[serde(default)]
    pub features: Vec<FeatureMeta>,
    /// Channels the CSV must contain. Empty means "whatever the CSV has".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub label: FeatureLabel,
    pub start_s: f64,
    pub end_s: f64,
}

impl SessionMeta {
    pub fn from_session(session: &Session) -> Self {
        let markers = session.markers();
        Self {
            participant_id: session.participant_id().to_string(),
            session_type: session.session_type(),
            distraction_start_s: markers.map(|m| m.distraction_start),
            distraction_end_s: markers.map(|m| m.distraction_end),
            features: markers
                .map(|m| {
                    m.features
                        .iter()
                        .map(|f| FeatureMeta {
                            label: f.label,
                            start_s: f.start,
                            end_s: f.end,
                        })
                        .collect()
                })
                .unwrap_or_default(),
            channels: Vec::new(),
        }
    }

    pub fn markers(&self) -> std::result::Result<Option<SegmentMarkers>, String> {
        match (self.distraction_start_s, self.distraction_end_s) {
            (None, None) => {
                if self.features.is_empty() {
                    Ok(None)
                } else {
                    Err("route features given without distraction markers".into())
                }
            }
            (Some(start), Some(end)) => Ok(Some(SegmentMarkers {
                distraction_start: start,
                distraction_end: end,
                features: self
                    .features
                    .iter()
                    .map(|f| RouteFeature {
                        label: f.label,
                        start: f.start_s,
                        end: f.end_s,
                    })
                    .collect(),
            })),
            _ => Err("distraction_start_s and distraction_end_s must both be set or both be null".into()),
        }
    }
}

/// Sidecar path for a session CSV.
pub fn meta_path_for(data_path: &Path) -> PathBuf {
    data_path.with_extension("json")
}

/// Loads a session from its CSV and JSON sidecar, validating every invariant.
pub fn load_session(data_path: &Path, meta_path: &Path) -> Result<Session> {
    let meta_text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: SessionMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::data(meta_path, Some(e.line() as u64), e.to_string()))?;
    let markers = meta.markers().map_err(|m| Error::data(meta_path, None, m))?;

    let file = fs::File::open(data_path).map_err(|e| Error::io(data_path, e))?;
    let channels = read_session_csv(file, data_path)?;

    for wanted in &meta.channels {
        if !channels.iter().any(|s| s.channel() == wanted) {
            return Err(Error::data(
                data_path,
                Some(1),
                format!("channel {wanted} listed in {} is missing", meta_path.display()),
            ));
        }
    }

    Session::new(meta.participant_id, meta.session_type, channels, markers).map_err(|e| {
        let path = match e {
            Error::MarkersOutsideSession
            | Error::InvalidMarkers(_)
            | Error::UnexpectedMarkers(_)
            | Error::MissingMarkers(_) => meta_path,
            _ => data_path,
        };
        Error::data(path, None, e.to_string())
    })
}

/// Loads `path` and its sidecar.
pub fn load_session_pair(data_path: &Path) -> Result<Session> {
    load_session(data_path, &meta_path_for(data_path))
}

/// Parses the session CSV. `source` only labels error messages.
pub fn read_session_csv<R: std::io::Read>(reader: R, source: &Path) -> Result<Vec<Series>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = csv.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(source, e))?,
        None => return Err(Error::data(source, None, "empty file")),
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.first().map(String::as_str) != Some("t") {
        return Err(Error::data(source, Some(1), "first column must be 't'"));
    }
    if names.len() < 2 {
        return Err(Error::data(source, Some(1), "no channel columns"));
    }
    for (i, name) in names.iter().enumerate().skip(1) {
        if name.is_empty() {
            return Err(Error::data(
                source,
                Some(1),
                format!("empty channel name in column {}", i + 1),
            ));
        }
        if names[..i].contains(name) {
            return Err(Error::data(source, Some(1), format!("duplicate channel {name}")));
        }
    }

    let width = names.len();
    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); width - 1];
    let mut step: Option<f64> = None;
    for record in records {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(Error::data(
                source,
                Some(line),
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let mut row =
            record.iter().zip(&names).map(|(field, name)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::data(source, Some(line), format!("invalid number '{field}' in column {name}"))
                })
            });
        let t = row.next().expect("width checked")?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::data(source, Some(line), "non-monotonic timestamps"));
            }
            let dt = t - prev;
            match step {
                None => step = Some(dt),
                Some(s) if (dt - s).abs() > STEP_TOLERANCE * s => {
                    return Err(Error::data(source, Some(line), "non-uniform sampling step"));
                }
                _ => {}
            }
        }
        times.push(t);
        for (column, value) in columns.iter_mut().zip(row) {
            column.push(value?);
        }
    }
    if times.is_empty() {
        return Err(Error::data(source, None, "no samples"));
    }

    names
        .into_iter()
        .skip(1)
        .zip(columns)
        .map(|(name, values)| Series::new(name, times.clone(), values))
        .collect()
}

fn csv_error(source: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    Error::data(source, line, e.to_string())
}

/// Formats a sample so that parsing it back yields the identical `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes the session CSV (channels in name order) to any writer.
pub fn write_session_csv<W: std::io::Write>(session: &Session, writer: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let series: Vec<&Series> = session.channels().collect();
    let mut header = vec!["t".to_string()];
    header.extend(series.iter().map(|s| s.channel().to_string()));
    out.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for (k, t) in session.times().iter().enumerate() {
        row.clear();
        row.push(fmt_f64(*t));
        row.extend(series.iter().map(|s| fmt_f64(s.values()[k])));
        out.write_record(&row)?;
    }
    out.flush()
}

/// Writes `session` to `data_path` and its sidecar to `meta_path`.
pub fn write_session(session: &Session, data_path: &Path, meta_path: &Path) -> Result<()> {
    let file = fs::File::create(data_path).map_err(|e| Error::io(data_path, e))?;
    write_session_csv(session, std::io::BufWriter::new(file)).map_err(|e| Error::io(data_path, e))?;
    let meta = SessionMeta::from_session(session);
    let json = serde_json::to_string_pretty(&meta).expect("meta serialises");
    fs::write(meta_path, json + "\n").map_err(|e| Error::io(meta_path, e))
}

/// Linear interpolation of `series` at `target_times`, clamping outside the source range.
pub fn resample_to_clock(series: &Series, target_times: &[f64]) -> Result<Series> {
    if series.len() < 2 {
        return Err(Error::SingletonSeries);
    }
    if target_times.is_empty() || target_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::TargetNotIncreasing);
    }
    let (times, values) = (series.times(), series.values());
    let last = times.len() - 1;
    // target times are sorted, so the bracketing index only moves forward
    let mut k = 0;
    let out = target_times
        .iter()
        .map(|&t| {
            if t <= times[0] {
                return values[0];
            }
            if t >= times[last] {
                return values[last];
            }
            while times[k + 1] < t {
                k += 1;
            }
            if times[k + 1] == t {
                return values[k + 1];
            }
            if times[k] == t {
                return values[k];
            }
            let frac = (t - times[k]) / (times[k + 1] - times[k]);
            values[k] + frac * (values[k + 1] - values[k])
        })
        .collect();
    Series::new(series.channel(), target_times.to_vec(), out)
}

/// Resamples `series` onto the session clock and adds it as a channel.
pub fn synchronize(session: &Session, series: &Series) -> Result<Session> {
    let resampled = resample_to_clock(series, session.times())?;
    let mut channels: Vec<Series> = session
        .channels()
        .filter(|s| s.channel() != series.channel())
        .cloned()
        .collect();
    channels.push(resampled);
    session.with_channels(channels)
}

/// Physically plausible bounds per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, (f64, f64)>", into = "BTreeMap<String, (f64, f64)>")]
pub struct ChannelLimits {
    bounds: BTreeMap<String, (f64, f64)>,
}

impl ChannelLimits {
    pub fn new(bounds: BTreeMap<String, (f64, f64)>) -> Result<Self> {
        for (channel, &(min, max)) in &bounds {
            if !(min < max) {
                return Err(Error::InvalidLimits(format!(
                    "{channel}: min {min} must be below max {max}"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn get(&self, channel: &str) -> Option<(f64, f64)> {
        self.bounds.get(channel).copied()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::data(path, Some(e.line() as u64), e.to_string()))
    }
}

impl Default for ChannelLimits {
    fn default() -> Self {
        let bounds = [
            ("HR", (30.0, 220.0)),
            ("VS", (0.0, 250.0)),
            ("Gear", (-1.0, 6.0)),
            ("Brake", (0.0, 1.0)),
            ("Accelerator", (0.0, 1.0)),
            ("Clutch", (0.0, 1.0)),
            ("Steering", (-720.0, 720.0)),
            ("AccLat", (-20.0, 20.0)),
            ("AccLong", (-20.0, 20.0)),
            ("LanePos", (-10.0, 10.0)),
            ("RPM", (0.0, 9000.0)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self { bounds }
    }
}

impl TryFrom<BTreeMap<String, (f64, f64)>> for ChannelLimits {
    type Error = Error;

    fn try_from(bounds: BTreeMap<String, (f64, f64)>) -> Result<Self> {
        Self::new(bounds)
    }
}

impl From<ChannelLimits> for BTreeMap<String, (f64, f64)> {
    fn from(limits: ChannelLimits) -> Self {
        limits.bounds
    }
}

/// Replaces samples outside the channel's bounds by interpolating between the
/// nearest in-range neighbours (the nearest one alone at either end).
///
/// Channels without an entry in `limits` pass through untouched.
pub fn clean_outliers(series: &Series, limits: &ChannelLimits) -> Result<(Series, usize)> {
    let Some((min, max)) = limits.get(series.channel()) else {
        return Ok((series.clone(), 0));
    };
    let in_range = |v: f64| v.is_finite() && min <= v && v <= max;
    let values = series.values();
    let times = series.times();
    let good: Vec<usize> = (0..values.len()).filter(|&i| in_range(values[i])).collect();
    if good.is_empty() {
        return Err(Error::EntirelyOutOfRange {
            channel: series.channel().to_string(),
        });
    }
    let removed = values.len() - good.len();
    if removed == 0 {
        return Ok((series.clone(), 0));
    }

    let mut cleaned = values.to_vec();
    let mut next = 0; // position in `good` of the first in-range index >= i
    for i in 0..values.len() {
        while next < good.len() && good[next] < i {
            next += 1;
        }
        if next < good.len() && good[next] == i {
            continue;
        }
        let left = next.checked_sub(1).map(|p| good[p]);
        let right = good.get(next).copied();
        cleaned[i] = match (left, right) {
            (Some(l), Some(r)) => {
                let frac = (times[i] - times[l]) / (times[r] - times[l]);
                values[l] + frac * (values[r] - values[l])
            }
            (Some(l), None) => values[l],
            (None, Some(r)) => values[r],
            (None, None) => unreachable!("at least one in-range sample"),
        };
    }
    Ok((series.with_values(cleaned)?, removed))
}

/// Cleans every channel of a session. Returns replacement counts per channel.
pub fn clean_session(session: &Session, limits: &ChannelLimits) -> Result<(Session, BTreeMap<String, usize>)> {
    let mut counts = BTreeMap::new();
    let mut channels = Vec::new();
    for series in session.channels() {
        let (cleaned, removed) = clean_outliers(series, limits)?;
        counts.insert(series.channel().to_string(), removed);
        channels.push(cleaned);
    }
    Ok((session.with_channels(channels)?, counts))
}

//! Core domain types: sensor series, sessions and their distraction markers.
//!
//! Everything here is immutable once constructed. Constructors validate the
//! invariants the rest of the crate relies on, so a `Session` in hand always
//! has a single uniform clock shared by all of its channels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channels reported by default, in the column order of the distance tables.
pub const CHANNELS: [&str; 11] = [
    "HR",
    "Gear",
    "Brake",
    "Accelerator",
    "Clutch",
    "Steering",
    "AccLat",
    "AccLong",
    "LanePos",
    "VS",
    "RPM",
];

/// Relative tolerance on the sampling step.
pub const STEP_TOLERANCE: f64 = 1e-9;

pub fn is_registered_channel(name: &str) -> bool {
    CHANNELS.contains(&name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionType {
    DS1,
    DS2,
    DS3,
    DS4,
    DS5,
}

impl SessionType {
    pub const ALL: [SessionType; 5] = [
        SessionType::DS1,
        SessionType::DS2,
        SessionType::DS3,
        SessionType::DS4,
        SessionType::DS5,
    ];

    /// Session types that carry a distraction (everything but the baseline).
    pub const DISTRACTIONS: [SessionType; 4] = [SessionType::DS1, SessionType::DS2, SessionType::DS3, SessionType::DS5];

    pub const BASELINE: SessionType = SessionType::DS4;

    pub fn is_baseline(self) -> bool {
        self == Self::BASELINE
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SessionType::DS1 => "DS1",
            SessionType::DS2 => "DS2",
            SessionType::DS3 => "DS3",
            SessionType::DS4 => "DS4",
            SessionType::DS5 => "DS5",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SessionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SessionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SessionType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown session type '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureLabel {
    Straight,
    Curve,
}

impl fmt::Display for FeatureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureLabel::Straight => f.write_str("straight"),
            FeatureLabel::Curve => f.write_str("curve"),
        }
    }
}

impl FromStr for FeatureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "straight" => Ok(FeatureLabel::Straight),
            "curve" => Ok(FeatureLabel::Curve),
            other => Err(Error::InvalidConfig(format!("unknown feature label '{other}'"))),
        }
    }
}

/// Position of a sample relative to the distraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Before,
    During,
    After,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Before, Segment::During, Segment::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Before => "before",
            Segment::During => "during",
            Segment::After => "after",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "before" | "b" => Ok(Segment::Before),
            "during" | "d" => Ok(Segment::During),
            "after" | "a" => Ok(Segment::After),
            other => Err(Error::InvalidConfig(format!("unknown segment '{other}'"))),
        }
    }
}

/// An annotated stretch of road inside the distraction window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteFeature {
    pub label: FeatureLabel,
    pub start: f64,
    pub end: f64,
}

impl RouteFeature {
    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMarkers {
    pub distraction_start: f64,
    pub distraction_end: f64,
    #[serde(default)]
    pub features: Vec<RouteFeature>,
}

impl SegmentMarkers {
    pub fn new(distraction_start: f64, distraction_end: f64) -> Self {
        Self {
            distraction_start,
            distraction_end,
            features: Vec::new(),
        }
    }

    pub fn with_feature(mut self, label: FeatureLabel, start: f64, end: f64) -> Self {
        self.features.push(RouteFeature { label, start, end });
        self
    }

    /// Half-open boundary rule: `during` is `[start, end)`.
    pub fn segment_of(&self, t: f64) -> Segment {
        if t < self.distraction_start {
            Segment::Before
        } else if t < self.distraction_end {
            Segment::During
        } else {
            Segment::After
        }
    }

    pub fn feature(&self, label: FeatureLabel) -> Option<&RouteFeature> {
        self.features.iter().find(|f| f.label == label)
    }

    /// Checks the marker ordering and feature layout, independent of any clock.
    pub fn validate(&self) -> Result<()> {
        let (start, end) = (self.distraction_start, self.distraction_end);
        if !start.is_finite() || !end.is_finite() || start >= end {
            return Err(Error::InvalidMarkers(format!(
                "distraction start {start} must precede end {end}"
            )));
        }
        let mut features: Vec<&RouteFeature> = self.features.iter().collect();
        features.sort_by(|a, b| a.start.total_cmp(&b.start));
        for f in &features {
            if !(f.start < f.end) {
                return Err(Error::InvalidMarkers(format!(
                    "{} feature [{}, {}) is empty",
                    f.label, f.start, f.end
                )));
            }
            if f.start < start || f.end > end {
                return Err(Error::InvalidMarkers(format!(
                    "{} feature [{}, {}) lies outside the distraction window",
                    f.label, f.start, f.end
                )));
            }
        }
        for pair in features.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::InvalidMarkers(format!(
                    "features at {} and {} overlap",
                    pair[0].start, pair[1].start
                )));
            }
        }
        Ok(())
    }

    /// Checks `session_start < start < end < session_end` on top of [`validate`](Self::validate).
    pub fn validate_within(&self, session_start: f64, session_end: f64) -> Result<()> {
        self.validate()?;
        if !(session_start < self.distraction_start && self.distraction_end < session_end) {
            return Err(Error::MarkersOutsideSession);
        }
        Ok(())
    }
}

/// One uniformly sampled sensor channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    channel: String,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Series {
    /// Builds a series, checking that it is non-empty and its times strictly increase.
    ///
    /// Uniform spacing is not enforced here (raw physiology streams are resampled
    /// before they join a session); see [`Series::is_uniform`].
    pub fn new(channel: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if times.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::NonMonotonic { index: i });
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonic { index: i + 1 });
        }
        Ok(Self {
            channel: channel.into(),
            times,
            values,
        })
    }

    /// Series on a regular clock `start + k / rate`.
    pub fn regular(channel: impl Into<String>, start: f64, rate_hz: f64, values: Vec<f64>) -> Result<Self> {
        let times = regular_clock(start, rate_hz, values.len());
        Self::new(channel, times, values)
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Mean sampling step, or `None` for a single sample.
    pub fn step(&self) -> Option<f64> {
        let n = self.times.len();
        (n > 1).then(|| (self.times[n - 1] - self.times[0]) / (n - 1) as f64)
    }

    /// Index of the first sample that breaks uniform spacing, if any.
    pub fn first_nonuniform_sample(&self) -> Option<usize> {
        let step = self.step()?;
        self.times
            .windows(2)
            .position(|w| ((w[1] - w[0]) - step).abs() > STEP_TOLERANCE * step)
            .map(|i| i + 1)
    }

    pub fn is_uniform(&self) -> bool {
        self.first_nonuniform_sample().is_none()
    }

    /// Same clock, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                times: self.len(),
                values: values.len(),
            });
        }
        Ok(Self {
            channel: self.channel.clone(),
            times: self.times.clone(),
            values,
        })
    }

    pub fn renamed(mut self, channel: impl Into<String>) -> Self {
        self.channel = channel.into();
        self
    }

    /// Contiguous sub-series over `range` (sample indices).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::DegenerateSegment(format!(
                "sample range {}..{} of a {}-sample {} series",
                range.start,
                range.end,
                self.len(),
                self.channel
            )));
        }
        Ok(Self {
            channel: self.channel.clone(),
            times: self.times[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
        })
    }

    pub fn into_parts(self) -> (String, Vec<f64>, Vec<f64>) {
        (self.channel, self.times, self.values)
    }
}

/// `start + k / rate_hz` for `k = 0..n`. Division keeps whole-second marks exact.
pub fn regular_clock(start: f64, rate_hz: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| start + k as f64 / rate_hz).collect()
}

/// A driving session: all channels on one clock plus distraction markers.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    participant_id: String,
    session_type: SessionType,
    channels: BTreeMap<String, Series>,
    markers: Option<SegmentMarkers>,
}

impl Session {
    pub fn new(
        participant_id: impl Into<String>,
        session_type: SessionType,
        channels: Vec<Series>,
        markers: Option<SegmentMarkers>,
    ) -> Result<Self> {
        let participant_id = participant_id.into();
        let Some(first) = channels.first() else {
            return Err(Error::EmptySeries);
        };
        if let Some(i) = first.first_nonuniform_sample() {
            return Err(Error::NonUniform { index: i });
        }
        let clock = first.times().to_vec();
        let mut map = BTreeMap::new();
        for series in channels {
            if series.times() != clock.as_slice() {
                return Err(Error::ClockMismatch {
                    channel: series.channel().to_string(),
                });
            }
            let name = series.channel().to_string();
            if map.insert(name.clone(), series).is_some() {
                return Err(Error::DuplicateChannel(name));
            }
        }
        match (&markers, session_type.is_baseline()) {
            (Some(_), true) => return Err(Error::UnexpectedMarkers(session_type)),
            (None, false) => return Err(Error::MissingMarkers(session_type)),
            (Some(m), false) => m.validate_within(clock[0], clock[clock.len() - 1])?,
            (None, true) => {}
        }
        Ok(Self {
            participant_id,
            session_type,
            channels: map,
            markers,
        })
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn session_type(&self) -> SessionType {
        self.session_type
    }

    pub fn markers(&self) -> Option<&SegmentMarkers> {
        self.markers.as_ref()
    }

    pub fn channels(&self) -> impl Iterator<Item = &Series> {
        self.channels.values()
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.contains_key(name)
    }

    pub fn channel(&self, name: &str) -> Result<&Series> {
        self.channels.get(name).ok_or_else(|| Error::MissingChannel {
            participant: self.participant_id.clone(),
            channel: name.to_string(),
        })
    }

    /// The shared clock.
    pub fn times(&self) -> &[f64] {
        self.channels
            .values()
            .next()
            .map(Series::times)
            .expect("sessions hold at least one channel")
    }

    pub fn len(&self) -> usize {
        self.times().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Rebuilds the session under a different type and markers, re-validating.
    pub fn retyped(&self, session_type: SessionType, markers: Option<SegmentMarkers>) -> Result<Self> {
        Session::new(
            self.participant_id.clone(),
            session_type,
            self.channels.values().cloned().collect(),
            markers,
        )
    }

    /// Replaces channels, re-validating the clock.
    pub fn with_channels(&self, channels: Vec<Series>) -> Result<Self> {
        Session::new(
            self.participant_id.clone(),
            self.session_type,
            channels,
            self.markers.clone(),
        )
    }
}

/// A series split around the distraction.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedSeries {
    pub before: Series,
    pub during: Series,
    pub after: Series,
}

impl SegmentedSeries {
    pub fn get(&self, segment: Segment) -> &Series {
        match segment {
            Segment::Before => &self.before,
            Segment::During => &self.during,
            Segment::After => &self.after,
        }
    }

    pub fn lengths(&self) -> [usize; 3] {
        [self.before.len(), self.during.len(), self.after.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clock(n: usize) -> Vec<f64> {
        regular_clock(0.0, 1.0, n)
    }

    #[test]
    fn series_rejects_bad_clocks() {
        assert!(matches!(
            Series::new("VS", vec![0.0, 1.0], vec![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(Series::new("VS", vec![], vec![]), Err(Error::EmptySeries)));
        assert!(matches!(
            Series::new("VS", vec![0.0, 2.0, 1.0], vec![0.0; 3]),
            Err(Error::NonMonotonic { index: 2 })
        ));
        assert!(matches!(
            Series::new("VS", vec![0.0, 0.0], vec![0.0; 2]),
            Err(Error::NonMonotonic { index: 1 })
        ));
    }

    #[test]
    fn uniformity_check() {
        let s = Series::new("VS", vec![0.0, 1.0, 2.0, 4.0], vec![0.0; 4]).unwrap();
        assert!(!s.is_uniform());
        let s = Series::regular("VS", 0.0, 10.0, vec![0.0; 4200]).unwrap();
        assert!(s.is_uniform());
        assert_eq!(s.times()[1200], 120.0);
    }

    #[test]
    fn boundary_rule_is_half_open() {
        let m = SegmentMarkers::new(3.0, 7.0);
        assert_eq!(m.segment_of(2.999), Segment::Before);
        assert_eq!(m.segment_of(3.0), Segment::During);
        assert_eq!(m.segment_of(6.999), Segment::During);
        assert_eq!(m.segment_of(7.0), Segment::After);
    }

    #[test]
    fn session_marker_invariants() {
        let vs = Series::new("VS", clock(10), vec![1.0; 10]).unwrap();
        let hr = Series::new("HR", clock(10), vec![70.0; 10]).unwrap();
        let ok = Session::new(
            "P1",
            SessionType::DS1,
            vec![vs.clone(), hr.clone()],
            Some(SegmentMarkers::new(3.0, 7.0)),
        );
        assert!(ok.is_ok());

        let baseline_with_markers = Session::new(
            "P1",
            SessionType::DS4,
            vec![vs.clone()],
            Some(SegmentMarkers::new(3.0, 7.0)),
        );
        assert!(matches!(baseline_with_markers, Err(Error::UnexpectedMarkers(_))));

        let missing = Session::new("P1", SessionType::DS2, vec![vs.clone()], None);
        assert!(matches!(missing, Err(Error::MissingMarkers(_))));

        let outside = Session::new(
            "P1",
            SessionType::DS1,
            vec![vs.clone()],
            Some(SegmentMarkers::new(3.0, 9.0)),
        );
        assert!(matches!(outside, Err(Error::MarkersOutsideSession)));
        let at_start = Session::new(
            "P1",
            SessionType::DS1,
            vec![vs.clone()],
            Some(SegmentMarkers::new(0.0, 5.0)),
        );
        assert!(matches!(at_start, Err(Error::MarkersOutsideSession)));

        let other_clock = Series::new("HR", regular_clock(0.5, 1.0, 10), vec![70.0; 10]).unwrap();
        assert!(matches!(
            Session::new("P1", SessionType::DS4, vec![vs, other_clock], None),
            Err(Error::ClockMismatch { .. })
        ));
    }

    #[test]
    fn feature_layout_validation() {
        let m = SegmentMarkers::new(10.0, 50.0)
            .with_feature(FeatureLabel::Curve, 12.0, 20.0)
            .with_feature(FeatureLabel::Straight, 20.0, 40.0);
        assert!(m.validate().is_ok());

        let overlapping = SegmentMarkers::new(10.0, 50.0)
            .with_feature(FeatureLabel::Curve, 12.0, 25.0)
            .with_feature(FeatureLabel::Straight, 20.0, 40.0);
        assert!(matches!(overlapping.validate(), Err(Error::InvalidMarkers(_))));

        let outside = SegmentMarkers::new(10.0, 50.0).with_feature(FeatureLabel::Curve, 45.0, 55.0);
        assert!(matches!(outside.validate(), Err(Error::InvalidMarkers(_))));
    }

    #[test]
    fn parse_enums() {
        assert_eq!("ds3".parse::<SessionType>().unwrap(), SessionType::DS3);
        assert!("DS6".parse::<SessionType>().is_err());
        assert_eq!("curve".parse::<FeatureLabel>().unwrap(), FeatureLabel::Curve);
        assert_eq!("during".parse::<Segment>().unwrap(), Segment::During);
    }
}

//! Baseline-referenced distances per session and the two paired designs.
//!
//! For one channel of one distraction session the procedure is: align the
//! whole query series to the participant's baseline with DTW and warp it onto
//! the baseline clock, split both at the (mapped) distraction markers, then
//! measure each before/during/after pair with the coarse and fine distances.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtw::{align_values, warp_values, AlignConfig, Alignment};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{coarse_distance_with, fine_distance, CoarseMode, FineDistanceSeries, DEFAULT_WINDOW};
use crate::model::{Segment, Series, Session, SessionType};
use crate::segmentation::{first_index_at_or_after, split_at, split_segments};
use crate::stats::{mean_variance, paired_test, TestKind, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub window: usize,
    pub align: AlignConfig,
    pub coarse_mode: CoarseMode,
    /// z-score query and reference with the reference channel's mean and stddev.
    pub normalize: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            align: AlignConfig::default(),
            coarse_mode: CoarseMode::default(),
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDistanceReport {
    pub participant_id: String,
    pub distraction_type: SessionType,
    pub channel: String,
    pub window: usize,
    pub coarse_before: f64,
    pub coarse_during: f64,
    pub coarse_after: f64,
    pub fine_before: FineDistanceSeries,
    pub fine_during: FineDistanceSeries,
    pub fine_after: FineDistanceSeries,
    /// Accumulated DTW cost of the whole-series alignment.
    pub alignment_distance: f64,
    /// Distraction start/end as sample indices on the reference clock.
    pub reference_split: (usize, usize),
}

impl SegmentDistanceReport {
    pub fn coarse(&self, segment: Segment) -> f64 {
        match segment {
            Segment::Before => self.coarse_before,
            Segment::During => self.coarse_during,
            Segment::After => self.coarse_after,
        }
    }

    pub fn fine(&self, segment: Segment) -> &FineDistanceSeries {
        match segment {
            Segment::Before => &self.fine_before,
            Segment::During => &self.fine_during,
            Segment::After => &self.fine_after,
        }
    }
}

/// Maps a query sample index onto the reference clock: the earliest reference
/// index paired with it. `query_len` maps to `reference_len`.
fn map_query_index(alignment: &Alignment, k: usize, query_len: usize, reference_len: usize) -> usize {
    if k >= query_len {
        return reference_len;
    }
    let p = alignment.path.partition_point(|&(i, _)| i < k);
    alignment.path[p].1
}

fn zscore(values: &[f64], mean: f64, sd: f64) -> Vec<f64> {
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Coarse and fine distances of one channel of `session` from the same channel
/// of `baseline`, for each of the three segments.
pub fn segment_distances(
    session: &Session,
    baseline: &Session,
    channel: &str,
    config: &AnalysisConfig,
) -> Result<SegmentDistanceReport> {
    if !baseline.session_type().is_baseline() {
        return Err(Error::NotBaseline(baseline.session_type()));
    }
    let markers = session.markers().ok_or(Error::MissingMarkers(session.session_type()))?;
    let query = session.channel(channel)?;
    let reference = baseline.channel(channel)?;

    let (qv, rv) = if config.normalize {
        let (mean, var) = mean_variance(reference.values())?;
        if var == 0.0 {
            return Err(Error::ZeroVariance);
        }
        let sd = var.sqrt();
        (zscore(query.values(), mean, sd), zscore(reference.values(), mean, sd))
    } else {
        (query.values().to_vec(), reference.values().to_vec())
    };

    let alignment = align_values(&qv, &rv, &config.align)?;
    let warped = warp_values(&qv, rv.len(), &alignment)?;

    let (n, m) = (qv.len(), rv.len());
    let start = first_index_at_or_after(query.times(), markers.distraction_start);
    let end = first_index_at_or_after(query.times(), markers.distraction_end);
    let ref_start = map_query_index(&alignment, start, n, m);
    let ref_end = map_query_index(&alignment, end, n, m);

    let warped = Series::new(channel, reference.times().to_vec(), warped)?;
    let reference = Series::new(channel, reference.times().to_vec(), rv)?;
    let q_parts = split_at(&warped, ref_start, ref_end)?;
    let r_parts = split_at(&reference, ref_start, ref_end)?;

    let mut coarse = [0.0; 3];
    let mut fine = Vec::with_capacity(3);
    for (k, segment) in Segment::ALL.into_iter().enumerate() {
        let (q, r) = (q_parts.get(segment).values(), r_parts.get(segment).values());
        if config.window > q.len() {
            return Err(Error::WindowTooLarge {
                window: config.window,
                len: q.len(),
            });
        }
        coarse[k] = coarse_distance_with(q, r, config.coarse_mode)?;
        fine.push(fine_distance(q, r, config.window)?);
    }
    let mut fine = fine.into_iter();
    Ok(SegmentDistanceReport {
        participant_id: session.participant_id().to_string(),
        distraction_type: session.session_type(),
        channel: channel.to_string(),
        window: config.window,
        coarse_before: coarse[0],
        coarse_during: coarse[1],
        coarse_after: coarse[2],
        fine_before: fine.next().expect("three segments"),
        fine_during: fine.next().expect("three segments"),
        fine_after: fine.next().expect("three segments"),
        alignment_distance: alignment.distance,
        reference_split: (ref_start, ref_end),
    })
}

/// `100 · |Δ_b − Δ_d| / Δ_b`, in percent.
pub fn relative_difference(before: f64, during: f64) -> Result<f64> {
    if before <= 0.0 {
        return Err(Error::DegenerateBaseline);
    }
    Ok(100.0 * (before - during).abs() / before)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantValue {
    pub participant_id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub distraction_type: SessionType,
    pub channel: String,
    /// Relative differences in percent.
    pub values: Vec<ParticipantValue>,
    pub mean: f64,
    /// Sample standard deviation.
    pub stddev: f64,
}

pub fn panel_summary(values: &[ParticipantValue], distraction: SessionType, channel: &str) -> Result<PanelSummary> {
    let raw: Vec<f64> = values.iter().map(|v| v.value).collect();
    let (mean, var) = mean_variance(&raw)?;
    Ok(PanelSummary {
        distraction_type: distraction,
        channel: channel.to_string(),
        values: values.to_vec(),
        mean,
        stddev: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub participant_id: String,
    pub session: SessionType,
    pub channel: String,
    pub segment: Segment,
    pub mean: f64,
    pub variance: f64,
}

/// Mean and sample variance of each segment of the raw (unaligned) channel.
pub fn segment_stats(session: &Session, channel: &str) -> Result<Vec<SegmentStats>> {
    let markers = session.markers().ok_or(Error::MissingMarkers(session.session_type()))?;
    let parts = split_segments(session.channel(channel)?, markers)?;
    Segment::ALL
        .into_iter()
        .map(|segment| {
            let values = parts.get(segment).values();
            let (mean, variance) = mean_variance(values)
                .map_err(|_| Error::DegenerateSegment(format!("{segment} segment of {channel} needs two samples")))?;
            Ok(SegmentStats {
                participant_id: session.participant_id().to_string(),
                session: session.session_type(),
                channel: channel.to_string(),
                segment,
                mean,
                variance,
            })
        })
        .collect()
}

/// Sort key that orders `P2` before `P10`.
pub fn natural_key(id: &str) -> (String, u64, String) {
    let digits_at = id.find(|c: char| c.is_ascii_digit()).unwrap_or(id.len());
    let (prefix, rest) = id.split_at(digits_at);
    let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let number = rest[..digits_end].parse().unwrap_or(0);
    (prefix.to_string(), number, rest[digits_end..].to_string())
}

/// All sessions of a participant panel.
#[derive(Debug, Clone, Default)]
pub struct Panel {
    sessions: BTreeMap<(String, SessionType), Session>,
}

impl Panel {
    pub fn new(sessions: impl IntoIterator<Item = Session>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in sessions {
            let key = (s.participant_id().to_string(), s.session_type());
            if map.contains_key(&key) {
                return Err(Error::DuplicateSession {
                    participant: key.0,
                    session_type: key.1,
                });
            }
            map.insert(key, s);
        }
        Ok(Self { sessions: map })
    }

    /// Loads every `*.csv` in `dir` that has a `.json` sidecar.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().is_some_and(|e| e == "csv") && io::meta_path_for(&path).is_file() {
                paths.push(path);
            }
        }
        paths.sort();
        let sessions = paths
            .iter()
            .map(|p| io::load_session_pair(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sessions)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    /// Participant ids in natural order.
    pub fn participants(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.sessions.keys().map(|(p, _)| p.as_str()).collect();
        ids.dedup();
        ids.sort_by_key(|id| natural_key(id));
        ids
    }

    pub fn session(&self, participant: &str, session_type: SessionType) -> Option<&Session> {
        self.sessions.get(&(participant.to_string(), session_type))
    }

    pub fn has_session_type(&self, session_type: SessionType) -> bool {
        self.sessions.keys().any(|(_, t)| *t == session_type)
    }

    pub fn has_channel(&self, channel: &str) -> bool {
        self.sessions.values().any(|s| s.has_channel(channel))
    }

    /// Applies `f` to every session.
    pub fn try_map(&self, f: impl FnMut(&Session) -> Result<Session>) -> Result<Self> {
        Self::new(self.sessions.values().map(f).collect::<Result<Vec<_>>>()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// Per-participant before/during segment means, no baseline.
    Means,
    /// Per-participant before/during distances from the baseline.
    Distances,
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Means => "means",
            Design::Distances => "distances",
        })
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "means" => Ok(Design::Means),
            "distances" => Ok(Design::Distances),
            other => Err(Error::InvalidConfig(format!("unknown design '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPair {
    pub participant_id: String,
    pub before: f64,
    pub during: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant_id: String,
    pub reason: String,
}

/// One paired test over the panel plus the pairs that fed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDesignResult {
    pub distraction_type: SessionType,
    pub channel: String,
    pub design: Design,
    pub result: TestResult,
    pub pairs: Vec<ParticipantPair>,
    pub excluded: Vec<Exclusion>,
}

fn run_test(
    design: Design,
    test: TestKind,
    distraction: SessionType,
    channel: &str,
    pairs: Vec<ParticipantPair>,
    excluded: Vec<Exclusion>,
) -> Result<PairedDesignResult> {
    let before: Vec<f64> = pairs.iter().map(|p| p.before).collect();
    let during: Vec<f64> = pairs.iter().map(|p| p.during).collect();
    let result = paired_test(test, &before, &during)?.with_design(design.to_string());
    Ok(PairedDesignResult {
        distraction_type: distraction,
        channel: channel.to_string(),
        design,
        result,
        pairs,
        excluded,
    })
}

/// Before/during means of the raw distraction session, tested across participants.
/// Baseline sessions are never consulted.
pub fn paired_design_means(
    panel: &Panel,
    distraction: SessionType,
    channel: &str,
    test: TestKind,
) -> Result<PairedDesignResult> {
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for participant in panel.participants() {
        let session = panel
            .session(participant, distraction)
            .ok_or_else(|| Error::MissingSession {
                participant: participant.to_string(),
                session_type: distraction,
            })?;
        if !session.has_channel(channel) {
            excluded.push(Exclusion {
                participant_id: participant.to_string(),
                reason: format!("channel {channel} missing"),
            });
            continue;
        }
        let stats = segment_stats(session, channel).map_err(|e| e.for_participant(participant))?;
        pairs.push(ParticipantPair {
            participant_id: participant.to_string(),
            before: stats[0].mean,
            during: stats[1].mean,
        });
    }
    run_test(Design::Means, test, distraction, channel, pairs, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceDesignOptions {
    pub config: AnalysisConfig,
    pub test: TestKind,
    /// Drop participants whose distances cannot be computed instead of failing.
    pub allow_partial: bool,
}

impl Default for DistanceDesignOptions {
    fn default() -> Self {
        Self {
            config: AnalysisConfig::default(),
            test: TestKind::WilcoxonSignedRank,
            allow_partial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceDesignResult {
    pub design: PairedDesignResult,
    pub reports: Vec<SegmentDistanceReport>,
}

/// `(Δ_b, Δ_d)` per participant against their own baseline, tested across participants.
pub fn paired_design_distances(
    panel: &Panel,
    distraction: SessionType,
    channel: &str,
    options: &DistanceDesignOptions,
) -> Result<DistanceDesignResult> {
    let mut jobs = Vec::new();
    let mut excluded = Vec::new();
    for participant in panel.participants() {
        let session = panel
            .session(participant, distraction)
            .ok_or_else(|| Error::MissingSession {
                participant: participant.to_string(),
                session_type: distraction,
            })?;
        let baseline = panel
            .session(participant, SessionType::BASELINE)
            .ok_or_else(|| Error::MissingBaseline {
                participant: participant.to_string(),
            })?;
        if !session.has_channel(channel) || !baseline.has_channel(channel) {
            excluded.push(Exclusion {
                participant_id: participant.to_string(),
                reason: format!("channel {channel} missing"),
            });
            continue;
        }
        jobs.push((participant, session, baseline));
    }

    let outcomes: Vec<(&str, Result<SegmentDistanceReport>)> = jobs
        .par_iter()
        .map(|(p, s, b)| (*p, segment_distances(s, b, channel, &options.config)))
        .collect();

    let mut reports = Vec::new();
    for (participant, outcome) in outcomes {
        match outcome {
            Ok(r) => reports.push(r),
            Err(e) if options.allow_partial => excluded.push(Exclusion {
                participant_id: participant.to_string(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.for_participant(participant)),
        }
    }
    let pairs = reports
        .iter()
        .map(|r| ParticipantPair {
            participant_id: r.participant_id.clone(),
            before: r.coarse_before,
            during: r.coarse_during,
        })
        .collect();
    let design = run_test(Design::Distances, options.test, distraction, channel, pairs, excluded)?;
    Ok(DistanceDesignResult { design, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{regular_clock, SegmentMarkers};

    fn baseline(values: Vec<f64>) -> Session {
        let vs = Series::regular("VS", 0.0, 10.0, values).unwrap();
        Session::new("P1", SessionType::DS4, vec![vs], None).unwrap()
    }

    fn wave(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| 50.0 + 5.0 * (k as f64 / 17.0).sin() + (k % 7) as f64 * 0.3)
            .collect()
    }

    #[test]
    fn self_comparison_is_zero() {
        let base = baseline(wave(300));
        let session = base
            .retyped(SessionType::DS1, Some(SegmentMarkers::new(10.0, 20.0)))
            .unwrap();
        let r = segment_distances(&session, &base, "VS", &AnalysisConfig::default()).unwrap();
        assert_eq!([r.coarse_before, r.coarse_during, r.coarse_after], [0.0; 3]);
        for seg in Segment::ALL {
            assert!(r.fine(seg).values.iter().all(|&s| s == 1.0));
        }
        assert_eq!(r.reference_split, (100, 200));
        assert_eq!(r.fine_before.len(), 100 - 10 + 1);
    }

    #[test]
    fn during_only_perturbation() {
        // the reference dips during the distraction; the query dips one unit less,
        // so the diagonal stays the cheapest path
        let shape = |during: f64| {
            (0..300)
                .map(|k| if (100..200).contains(&k) { during } else { 10.0 })
                .collect()
        };
        let base = baseline(shape(0.0));
        let vs = Series::regular("VS", 0.0, 10.0, shape(1.0)).unwrap();
        let session = Session::new("P1", SessionType::DS1, vec![vs], Some(SegmentMarkers::new(10.0, 20.0))).unwrap();
        let r = segment_distances(&session, &base, "VS", &AnalysisConfig::default()).unwrap();
        assert_eq!(r.coarse_before, 0.0);
        assert_eq!(r.coarse_after, 0.0);
        assert_eq!(r.coarse_during, 100.0);
    }

    #[test]
    fn rejects_wrong_inputs() {
        let base = baseline(wave(100));
        let session = base
            .retyped(SessionType::DS1, Some(SegmentMarkers::new(2.0, 5.0)))
            .unwrap();
        assert!(matches!(
            segment_distances(&base, &session, "VS", &AnalysisConfig::default()),
            Err(Error::NotBaseline(SessionType::DS1))
        ));
        assert!(matches!(
            segment_distances(&session, &base, "HR", &AnalysisConfig::default()),
            Err(Error::MissingChannel { .. })
        ));
        let wide = AnalysisConfig {
            window: 40,
            ..AnalysisConfig::default()
        };
        assert!(matches!(
            segment_distances(&session, &base, "VS", &wide),
            Err(Error::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn relative_difference_examples() {
        assert_eq!(relative_difference(10.0, 16.0).unwrap(), 60.0);
        assert_eq!(relative_difference(4.0, 4.0).unwrap(), 0.0);
        assert_eq!(relative_difference(2.0, 1.0).unwrap(), 50.0);
        assert!(matches!(relative_difference(0.0, 1.0), Err(Error::DegenerateBaseline)));
    }

    #[test]
    fn panel_summary_examples() {
        let vals = |xs: &[f64]| {
            xs.iter()
                .enumerate()
                .map(|(i, &v)| ParticipantValue {
                    participant_id: format!("P{}", i + 1),
                    value: v,
                })
                .collect::<Vec<_>>()
        };
        let s = panel_summary(&vals(&[10.0, 20.0]), SessionType::DS1, "HR").unwrap();
        assert_eq!(s.mean, 15.0);
        assert!((s.stddev - 50f64.sqrt()).abs() < 1e-12);
        let s = panel_summary(&vals(&[7.0; 5]), SessionType::DS1, "HR").unwrap();
        assert_eq!(s.stddev, 0.0);
        assert!(panel_summary(&vals(&[7.0]), SessionType::DS1, "HR").is_err());
    }

    #[test]
    fn segment_stats_examples() {
        let vs = Series::new(
            "VS",
            regular_clock(0.0, 1.0, 9),
            vec![5.0, 5.0, 5.0, 1.0, 2.0, 3.0, 5.0, 5.0, 5.0],
        )
        .unwrap();
        let s = Session::new("P1", SessionType::DS2, vec![vs], Some(SegmentMarkers::new(3.0, 6.0))).unwrap();
        let stats = segment_stats(&s, "VS").unwrap();
        assert_eq!((stats[0].mean, stats[0].variance), (5.0, 0.0));
        assert_eq!((stats[1].mean, stats[1].variance), (2.0, 1.0));
        assert_eq!(stats[1].segment, Segment::During);
    }

    #[test]
    fn natural_participant_order() {
        let mut ids = vec!["P10", "P2", "P1", "P16", "P3"];
        ids.sort_by_key(|id| natural_key(id));
        assert_eq!(ids, vec!["P1", "P2", "P3", "P10", "P16"]);
    }
}

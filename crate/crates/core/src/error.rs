use std::path::PathBuf;

use crate::model::{FeatureLabel, SessionType};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file failed to parse or validate. `line` is 1-based and counts the header.
    #[error("{}: {message}{}", .path.display(), .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("series must contain at least one sample")]
    EmptySeries,

    #[error("times and values differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },

    #[error("non-monotonic timestamps at sample {index}")]
    NonMonotonic { index: usize },

    #[error("non-uniform sampling step at sample {index}")]
    NonUniform { index: usize },

    #[error("channel {channel} is not on the session clock")]
    ClockMismatch { channel: String },

    #[error("duplicate channel {0}")]
    DuplicateChannel(String),

    #[error("markers outside session")]
    MarkersOutsideSession,

    #[error("invalid markers: {0}")]
    InvalidMarkers(String),

    #[error("{0} sessions must not carry distraction markers")]
    UnexpectedMarkers(SessionType),

    #[error("{0} sessions require distraction markers")]
    MissingMarkers(SessionType),

    #[error("cannot interpolate singleton series")]
    SingletonSeries,

    #[error("target times must be strictly increasing")]
    TargetNotIncreasing,

    #[error("invalid channel limits: {0}")]
    InvalidLimits(String),

    #[error("channel {channel} entirely out of range")]
    EntirelyOutOfRange { channel: String },

    #[error("infeasible band: radius {radius} is smaller than the length difference {length_difference}")]
    InfeasibleBand { radius: usize, length_difference: usize },

    #[error("alignment path inconsistent with series lengths: {0}")]
    InconsistentPath(String),

    #[error("segments must be aligned to equal length ({query} vs {reference})")]
    UnequalLengths { query: usize, reference: usize },

    #[error("window exceeds segment length (w = {window}, n = {len})")]
    WindowTooLarge { window: usize, len: usize },

    #[error("window must be at least 1")]
    ZeroWindow,

    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    #[error("feature not annotated: {0}")]
    FeatureNotAnnotated(FeatureLabel),

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("paired samples differ in length ({x} vs {y})")]
    UnpairedSamples { x: usize, y: usize },

    #[error("degenerate paired sample: differences have zero spread")]
    DegeneratePairedSample,

    #[error("no nonzero differences")]
    NoNonzeroDifferences,

    #[error("zero variance")]
    ZeroVariance,

    #[error("degenerate baseline-before distance")]
    DegenerateBaseline,

    #[error("channel {channel} missing for participant {participant}")]
    MissingChannel { participant: String, channel: String },

    #[error("session {session_type} missing for participant {participant}")]
    MissingSession {
        participant: String,
        session_type: SessionType,
    },

    #[error("baseline DS4 missing for participant {participant}")]
    MissingBaseline { participant: String },

    #[error("reference session must be the DS4 baseline, got {0}")]
    NotBaseline(SessionType),

    #[error("duplicate session {session_type} for participant {participant}")]
    DuplicateSession {
        participant: String,
        session_type: SessionType,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("participant {participant}: {source}")]
    Participant {
        participant: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn data(path: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_participant(self, participant: &str) -> Self {
        match self {
            e @ (Error::Participant { .. }
            | Error::MissingBaseline { .. }
            | Error::MissingChannel { .. }
            | Error::MissingSession { .. }) => e,
            e => Error::Participant {
                participant: participant.to_string(),
                source: Box::new(e),
            },
        }
    }
}

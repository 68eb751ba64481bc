use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pyramid level {level} would be {width}x{height}, below the 8 pixel minimum")]
    ImageTooSmall {
        level: usize,
        width: usize,
        height: usize,
    },
    #[error("sample position ({x}, {y}) outside the interpolable region")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("sequence {dir} is missing frame {index}")]
    MissingFrame { dir: PathBuf, index: usize },
    #[error("corrupt flow file {path}: {reason}")]
    CorruptFlow { path: PathBuf, reason: String },
    #[error("malformed pose line {line} in {path}: {reason}")]
    MalformedPoseLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {reason}")]
    ImageCodec { path: PathBuf, reason: String },

    #[error("need at least 8 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("every RANSAC hypothesis was degenerate")]
    DegenerateConfiguration,
    #[error("empty input")]
    EmptyInput,

    #[error("waypoints {0} and {1} share the same timestamp")]
    DuplicateWaypointTimes(usize, usize),
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),

    #[error("reward breakdowns belong to different frames ({policy} vs {reference})")]
    FrameMismatch { policy: usize, reference: usize },
    #[error("metrics requested for an empty sequence")]
    EmptySequence,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("rollout buffer is empty")]
    EmptyBuffer,
    #[error("no reference run for environment {0}")]
    MissingReferenceRun(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

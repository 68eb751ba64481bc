//! Command errors and their process exit codes.

use std::fmt;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// A sequence has no ground-truth flow but drift was required.
    MissingFlow(String),
    /// A sequence present for one method is absent for another.
    SequenceMismatch { sequence: String, method: String },
    Data(String),
    Core(advo_core::Error),
    Internal(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use advo_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::MissingFlow(_) | CliError::SequenceMismatch { .. } | CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) => EXIT_CONFIG,
                E::Io { .. }
                | E::MissingFrame { .. }
                | E::CorruptFlow { .. }
                | E::MalformedPoseLine { .. }
                | E::ImageCodec { .. }
                | E::InvalidImage(_)
                | E::ImageTooSmall { .. }
                | E::EmptySequence
                | E::EmptyInput
                | E::Checkpoint(_) => EXIT_DATA,
                _ => EXIT_INTERNAL,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::MissingFlow(s) => write!(f, "sequence {s} has no ground-truth flow but drift was required"),
            CliError::SequenceMismatch { sequence, method } => {
                write!(f, "sequence {sequence} is missing from method {method}")
            }
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<advo_core::Error> for CliError {
    fn from(e: advo_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    ReadInput {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    WriteOutput {
        path: PathBuf,
        source: std::io::Error,
    },

    /// A document (profile JSON, performance CSV, prediction CSV, config) is malformed.
    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },

    /// Input is well-formed but violates a domain invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} out of range: {message}")]
    OutOfRange { what: &'static str, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn malformed(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Malformed {
            what: what.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn out_of_range(what: &'static str, message: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 2 for validation failures, 3 for computation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::ZeroVariance(_) | Error::WriteOutput { .. } => 3,
            _ => 2,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A beamformer, group or aggregation whose denominator vanished.
    #[error("degenerate {what}: {detail}")]
    Degenerate { what: &'static str, detail: String },

    /// A stated precondition of a theorem-backed formula does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("{path}: {detail} (at byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        detail: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    /// Wraps an error raised inside the training loop with its position.
    #[error("frame {frame}, round {round}: {source}")]
    Round {
        frame: usize,
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn degenerate(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Degenerate {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI, one per error category.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Format { .. } => 4,
            Error::Domain(_) | Error::Hypothesis(_) => 5,
            Error::Degenerate { .. } => 6,
            Error::Round { source, .. } => source.exit_code(),
        }
    }
}

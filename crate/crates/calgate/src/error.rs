//! Crate-wide error type.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by dataset I/O, fitting, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A malformed line in a CSV/NDJSON file, with its 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    /// File-level schema problems (bad header, missing columns).
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },

    /// A record violating a dataset invariant.
    #[error("stream {stream_id} at t_ms={t_ms}: {msg}")]
    Record {
        stream_id: String,
        t_ms: i64,
        msg: String,
    },

    /// Configuration or argument validation failure.
    #[error("{0}")]
    Invalid(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("cannot split {streams} stream(s) across {nonzero_fractions} nonzero fraction(s)")]
    TooFewStreams {
        streams: usize,
        nonzero_fractions: usize,
    },

    #[error("no sweep point reaches act-only precision {target}")]
    NoOperatingPoint { target: f64 },

    #[error("gate stepped with non-increasing time: t_ms={t_ms} after {prev_ms}")]
    NonMonotoneTime { t_ms: i64, prev_ms: i64 },
}

impl Error {
    /// Process exit code for the CLI: 1 for validation problems, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

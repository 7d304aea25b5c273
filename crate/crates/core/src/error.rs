use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the engine.
///
/// Data-level rejections (a reply that fails a parse rule, a candidate that
/// times out) are not errors; they are recorded as data. Everything here is
/// either a contract violation by the caller or an infrastructure failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: invalid record at `{field}`: {message}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },

    #[error("backend protocol error: {0}")]
    Protocol(String),

    #[error("mock script has no entry for prompt fingerprint {fingerprint} (call {ordinal})")]
    Script { fingerprint: String, ordinal: u64 },

    #[error("runner shim protocol violation: {0}")]
    Shim(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the environment rather than of caller input.
    pub fn is_infrastructure(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Backend { .. }
                | Error::Protocol(_)
                | Error::Shim(_)
                | Error::Locked(_)
                | Error::Script { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

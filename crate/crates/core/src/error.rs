use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a documented precondition (bad parameter, unknown
    /// class, malformed record).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A moment or estimate is undefined for the current state.
    #[error("numeric domain error: {0}")]
    Domain(String),

    #[error("no evidence: {0}")]
    NoEvidence(String),

    #[error("point {index} is not labeled with a fused segment")]
    Unlabeled { index: usize },

    #[error("corrupt snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid",
            Error::Domain(_) => "domain",
            Error::NoEvidence(_) => "no_evidence",
            Error::Unlabeled { .. } => "unlabeled",
            Error::Snapshot(_) => "snapshot",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Format { .. } => "format",
        }
    }

    /// Process exit code used by the command-line front end:
    /// 2 validation, 3 I/O, 4 numeric domain.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Domain(_) | Error::NoEvidence(_) => 4,
            _ => 2,
        }
    }
}

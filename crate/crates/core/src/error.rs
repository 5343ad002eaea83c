use std::io;

use thiserror::Error;

use crate::agent::AgentError;
use crate::center::CenterError;
use crate::feature::FeatureError;
use crate::tags::EmptyObject;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{what}, line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid corpus spec: {0}")]
    CorpusSpec(String),
    #[error("configuration and corpus disagree: {0}")]
    Mismatch(String),
    #[error("system is not quiescent: {0}")]
    NotQuiescent(String),
    #[error("unsupported snapshot version: {0}")]
    Version(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("object {id}: {source}")]
    Object {
        id: String,
        #[source]
        source: EmptyObject,
    },
    #[error(transparent)]
    EmptyObject(#[from] EmptyObject),
    #[error(transparent)]
    Center(#[from] CenterError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(what: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            what,
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the command-line tool. Each error class maps to
    /// its own nonzero code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Parse { .. } | Error::Json(_) | Error::Version(_) => 4,
            Error::Config(_) | Error::CorpusSpec(_) | Error::Mismatch(_) => 5,
            Error::NotQuiescent(_) => 6,
            Error::Invariant(_)
            | Error::UnknownClass(_)
            | Error::Object { .. }
            | Error::EmptyObject(_)
            | Error::Center(_)
            | Error::Agent(_)
            | Error::Feature(_) => 7,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::io;

use crate::graph::GraphError;
use crate::schema::{SchemaError, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("schema violation: {}", join_violations(.0))]
    Violations(Vec<Violation>),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse grouping of errors, used for HTTP status codes and exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    SchemaViolation,
    UnknownId,
    Conflict,
    InvalidArgument,
    Io,
}

impl Error {
    pub fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Graph(GraphError::UnknownEndpoint(_) | GraphError::UnknownNode(_)) => ErrorCategory::UnknownId,
            Error::Graph(GraphError::BadId(_)) => ErrorCategory::InvalidArgument,
            Error::Graph(GraphError::StaleBatch) => ErrorCategory::Conflict,
            Error::Graph(GraphError::Io(_)) | Error::Io(_) => ErrorCategory::Io,
            Error::Graph(_) | Error::Schema(_) | Error::Parse { .. } | Error::DuplicateKey(_) => ErrorCategory::Parse,
            Error::Violations(_) => ErrorCategory::SchemaViolation,
            Error::UnknownId(_) => ErrorCategory::UnknownId,
            Error::Conflict(_) => ErrorCategory::Conflict,
            Error::InvalidArgument(_) => ErrorCategory::InvalidArgument,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

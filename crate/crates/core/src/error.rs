use std::fmt;

use thiserror::Error;

/// Position of a syntax error in a kernel spec, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at {span}: {message}")]
    Parse { span: Span, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {message} (jitter tried up to {jitter:e})")]
    Numerical { message: String, jitter: f64 },

    #[error("optimization error: {0}")]
    Optimization(String),

    #[error("fit diverged at iteration {iteration}: {message}")]
    Fit {
        iteration: usize,
        message: String,
        trace: Vec<f64>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numerical { .. } | Error::Domain(_) => 4,
            Error::Optimization(_) | Error::Fit { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

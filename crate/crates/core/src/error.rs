use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid configuration or request (bad dimensions, bad search fields).
    Usage,
    /// Input data could not be read or is unusable.
    Data,
    /// Non-finite values during training, search or evaluation.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    Domain(&'static str),

    #[error("non-finite value at layer {layer} during {pass}")]
    Numeric { layer: usize, pass: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid field `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("infeasible box at coordinate {index}: lower {lower} > upper {upper}")]
    InfeasibleBox { index: usize, lower: f64, upper: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("column `{0}` is constant on the training split")]
    ConstantColumn(String),

    #[error("training diverged at epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("search produced a non-finite loss at iteration {iteration}")]
    Search { iteration: usize },

    #[error("search canceled at iteration {iteration}")]
    Canceled { iteration: usize },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Shape { .. }
            | Error::Config(_)
            | Error::InvalidField { .. }
            | Error::InfeasibleBox { .. }
            | Error::Canceled { .. } => ErrorKind::Usage,
            Error::Data(_)
            | Error::ConstantColumn(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Calibration(_) => ErrorKind::Data,
            Error::Domain(_)
            | Error::Numeric { .. }
            | Error::Training { .. }
            | Error::Search { .. } => ErrorKind::Numeric,
            Error::Trial { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

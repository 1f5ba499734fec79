use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use protoforge::{Error, ErrorKind};
use serde_json::json;
use thiserror::Error as ThisError;

pub type AppResult<T> = std::result::Result<T, AppError>;

#[derive(Debug, ThisError)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("{0} not found")]
    NotFound(String),

    #[error("calibration {calibration} was fitted against model hash {expected}, not {actual}")]
    HashMismatch {
        calibration: String,
        expected: String,
        actual: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        AppError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) => match e.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            },
            AppError::Invalid { .. } => 1,
            AppError::NotFound(_)
            | AppError::HashMismatch { .. }
            | AppError::Internal(_)
            | AppError::Io { .. } => 2,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            AppError::Core(Error::InfeasibleBox { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            AppError::Core(Error::Io { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            AppError::Core(e) => match e.kind() {
                ErrorKind::Usage | ErrorKind::Data => StatusCode::BAD_REQUEST,
                ErrorKind::Numeric => StatusCode::INTERNAL_SERVER_ERROR,
            },
            AppError::Invalid { .. } => StatusCode::BAD_REQUEST,
            AppError::NotFound(_) => StatusCode::NOT_FOUND,
            AppError::HashMismatch { .. } => StatusCode::CONFLICT,
            AppError::Internal(_) | AppError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Offending field, when the error names one.
    pub fn field(&self) -> Option<&str> {
        match self {
            AppError::Invalid { field, .. } => Some(field),
            AppError::Core(Error::InvalidField { field, .. }) => Some(field),
            _ => None,
        }
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        if let Some(f) = self.field() {
            body["field"] = json!(f);
        }
        (self.status(), Json(body)).into_response()
    }
}

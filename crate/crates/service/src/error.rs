use std::net::SocketAddr;
use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use pianofinger_core::StoreError;
use serde_json::json;
use thiserror::Error;

/// Startup and serving failures.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("store: {0}")]
    Store(StoreError),
    #[error("media root {0} is not a directory")]
    MediaRoot(PathBuf),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Error returned by a handler; rendered as a JSON body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            kind: "validation",
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "internal",
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let (status, kind) = match &err {
            StoreError::SessionNotFound(_) | StoreError::NoteNotFound(_) => {
                (StatusCode::NOT_FOUND, "not_found")
            }
            StoreError::StaleEdit { .. } => (StatusCode::CONFLICT, "stale_edit"),
            StoreError::IdCollision(_) => (StatusCode::CONFLICT, "conflict"),
            StoreError::PreconditionFailed(_) => {
                (StatusCode::PRECONDITION_FAILED, "precondition_failed")
            }
            StoreError::Calibration(_) => (StatusCode::UNPROCESSABLE_ENTITY, "calibration"),
            StoreError::InvalidId(_) | StoreError::IncompleteSession(_) => {
                (StatusCode::BAD_REQUEST, "validation")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            kind,
            message: err.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"kind": self.kind, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

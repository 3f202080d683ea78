use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Validation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = match &self {
            ApiError::Validation { path, message } => {
                json!({"error": "validation", "path": path, "message": message})
            }
            ApiError::NotFound(m) => json!({"error": "not_found", "message": m}),
            ApiError::Conflict(m) => json!({"error": "conflict", "message": m}),
            ApiError::Internal(m) => json!({"error": "internal", "message": m}),
        };
        (status, Json(body)).into_response()
    }
}

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use wayfare_core::eval::EvalError;
use wayfare_core::orchestrator::EngineError;

/// Every error body is `{code, message}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
            },
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::NotFound(_) => Self::not_found("session_not_found", message),
            EngineError::Busy(_) => Self::new(StatusCode::CONFLICT, "session_busy", message),
            EngineError::InvalidState { .. } => Self::new(StatusCode::CONFLICT, "invalid_state", message),
            EngineError::Validation(_) => Self::validation(message),
            EngineError::StageFailed { .. } => Self::new(StatusCode::BAD_GATEWAY, "stage_failed", message),
            EngineError::Persistence(ref source) => {
                tracing::error!(error = %source, "persistence failure");
                Self::internal(message).with_code("persistence_error")
            }
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NoSessions => Self::new(StatusCode::CONFLICT, "no_sessions", e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

impl ApiError {
    pub fn with_code(mut self, code: &'static str) -> Self {
        self.body.code = code;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

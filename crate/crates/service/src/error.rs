use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("NOT_FOUND: {0}")]
    NotFound(String),
    #[error("BAD_LOCATION: {0}")]
    BadLocation(String),
    #[error("BAD_EVENT: {0}")]
    BadEvent(String),
    #[error("UNAUTHENTICATED")]
    Unauthenticated,
    #[error("configuration: {0}")]
    Config(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "NOT_FOUND",
            ServiceError::BadLocation(_) => "BAD_LOCATION",
            ServiceError::BadEvent(_) => "BAD_EVENT",
            ServiceError::Unauthenticated => "UNAUTHENTICATED",
            ServiceError::Config(_) => "CONFIG",
            ServiceError::Internal(_) => "INTERNAL",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadLocation(_) | ServiceError::BadEvent(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unauthenticated => StatusCode::UNAUTHORIZED,
            ServiceError::Config(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<aurora_core::EventError> for ServiceError {
    fn from(e: aurora_core::EventError) -> Self {
        match e {
            aurora_core::EventError::BadEvent(m) => ServiceError::BadEvent(m),
            aurora_core::EventError::Unauthenticated => ServiceError::Unauthenticated,
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if matches!(self, ServiceError::Internal(_) | ServiceError::Config(_)) {
            tracing::error!(error = %self, "request failed");
        }
        (self.status(), Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}

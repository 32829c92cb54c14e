use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use followup_core::{FilterError, HarnessError, PlanError};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("session {0} not found")]
    NotFound(String),
    /// Request valid in isolation but not in the session's current phase.
    #[error("{message}")]
    Conflict { message: String, terminal: bool },
    #[error("persistence failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt session log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl ServiceError {
    pub fn conflict(message: impl Into<String>) -> Self {
        Self::Conflict {
            message: message.into(),
            terminal: false,
        }
    }

    pub fn ended(message: impl Into<String>) -> Self {
        Self::Conflict {
            message: message.into(),
            terminal: true,
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict { .. } => StatusCode::CONFLICT,
            Self::Harness(
                HarnessError::Config(_)
                | HarnessError::Plan(PlanError::InvalidParams(_))
                | HarnessError::Filter(
                    FilterError::NoiselessModel
                    | FilterError::EmptyFilter
                    | FilterError::BadGrid(_),
                ),
            ) => StatusCode::BAD_REQUEST,
            Self::Storage(_) | Self::CorruptLog(_) | Self::Harness(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        Self::CorruptLog(e.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let terminal = matches!(self, Self::Conflict { terminal: true, .. });
        let body = if terminal {
            json!({ "error": self.to_string(), "terminal": true })
        } else {
            json!({ "error": self.to_string() })
        };
        (self.status(), Json(body)).into_response()
    }
}

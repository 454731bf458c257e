use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ldrag_core::extract::ExtractionOutcome;
use ldrag_core::pipeline::PipelineError;
use ldrag_core::prompt::PromptError;
use ldrag_core::retrieval::RetrievalError;
use serde::{Deserialize, Serialize};

/// Body of every non-2xx response produced by the service itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    /// Raw model output, for extraction failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: ErrorDetail {
                    code: code.into(),
                    message: message.into(),
                    diagnostics: Vec::new(),
                    raw_text: None,
                },
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_ready() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "not_ready",
            "index is still being built",
        )
    }

    pub fn extraction_invalid(outcome: &ExtractionOutcome, raw_text: Option<String>) -> Self {
        let mut e = Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "extraction_invalid",
            "model output did not yield a valid query model",
        );
        e.body.error.diagnostics = outcome.diagnostics.clone();
        e.body.error.raw_text = raw_text;
        e
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::EmptyQuestion => ApiError::new(StatusCode::BAD_REQUEST, "empty_question", e.to_string()),
            PipelineError::Retrieval(RetrievalError::InvalidK { .. }) => ApiError::bad_request(e.to_string()),
            PipelineError::Retrieval(RetrievalError::EmptyIndex) => ApiError::not_ready(),
            PipelineError::Prompt(PromptError::ContextBudgetExceeded { .. }) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "context_budget_exceeded",
                e.to_string(),
            ),
            _ if e.is_upstream() => ApiError::new(StatusCode::BAD_GATEWAY, "upstream", e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

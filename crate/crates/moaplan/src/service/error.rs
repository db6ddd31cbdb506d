use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use moaplan_core::exec::ExecError;
use moaplan_core::planner::PlannerError;
use moaplan_core::provider::ProviderError;
use serde_json::{json, Value};

/// `{"error": {"code", "message", ...details}}` with a matching status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no {what} {id:?}"))
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn to_body(&self) -> Value {
        let mut err = json!({ "code": self.code, "message": self.message });
        if let Value::Object(extra) = &self.details {
            for (k, v) in extra {
                err[k] = v.clone();
            }
        }
        json!({ "error": err })
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.to_body())).into_response()
    }
}

impl From<ProviderError> for ApiError {
    fn from(e: ProviderError) -> Self {
        let (status, code) = match &e {
            ProviderError::ReplayMiss { .. } => (StatusCode::BAD_GATEWAY, "replay_miss"),
            ProviderError::RateLimited { .. } => (StatusCode::SERVICE_UNAVAILABLE, "rate_limited"),
            ProviderError::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, "provider_config"),
            _ => (StatusCode::BAD_GATEWAY, "provider_error"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<PlannerError> for ApiError {
    fn from(e: PlannerError) -> Self {
        use PlannerError as P;
        let msg = e.to_string();
        match e {
            P::EmptyInstruction | P::InvalidConfig(_) => ApiError::invalid(msg),
            P::WrongState { expected, actual } => ApiError::new(StatusCode::CONFLICT, "wrong_state", msg)
                .with_details(json!({ "expected": expected, "actual": actual })),
            P::TurnLimit(_) => ApiError::new(StatusCode::CONFLICT, "turn_limit", msg),
            P::NotConverged => ApiError::new(StatusCode::CONFLICT, "not_converged", msg),
            P::UnknownLabel(label) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_label", msg)
                .with_details(json!({ "label": label })),
            P::DuplicateAnswer(label) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "duplicate_answer", msg)
                .with_details(json!({ "label": label })),
            P::IncompleteAnswers { missing } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "incomplete_answers", msg)
                    .with_details(json!({ "missing": missing }))
            }
            P::DraftParseFailure(_) => ApiError::new(StatusCode::BAD_GATEWAY, "draft_parse_failure", msg),
            P::QuestionParseFailure(_) => ApiError::new(StatusCode::BAD_GATEWAY, "question_parse_failure", msg),
            P::InvalidTree(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_tree", msg),
            P::HumanSource(_) | P::CorruptLog(_) => ApiError::internal(msg),
            P::Provider(p) => p.into(),
        }
    }
}

impl From<ExecError> for ApiError {
    fn from(e: ExecError) -> Self {
        let msg = e.to_string();
        match e {
            ExecError::UnboundAction(actions) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unbound_action", msg)
                .with_details(json!({ "actions": actions })),
            ExecError::MissingProfile(actions) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_profile", msg)
                    .with_details(json!({ "actions": actions }))
            }
            _ => ApiError::invalid(msg),
        }
    }
}

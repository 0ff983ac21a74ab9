use std::fmt::{Debug, Display};

use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use wayfind_core::api::ErrorBody;
use wayfind_core::pipeline::PipelineError;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

/// Leading identifier of a `Debug` rendering, i.e. the enum variant name.
fn variant_name<E: Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .next()
        .unwrap_or("Error")
        .to_string()
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                kind: kind.to_string(),
                message: message.into(),
                key: None,
            },
        }
    }

    /// A rejected input, named after the core error variant.
    pub fn invalid<E: Debug + Display>(e: E) -> Self {
        Self::new(StatusCode::BAD_REQUEST, &variant_name(&e), e.to_string())
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", msg)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::InitializationError(_) => StatusCode::UNPROCESSABLE_ENTITY,
            PipelineError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let mut err = Self::new(status, &variant_name(&e), e.to_string());
        if let PipelineError::SchemaViolation { key, .. } = e {
            err.body.key = Some(key);
        }
        err
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), "BadRequestBody", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wayfind_core::tts::TtsError;

    #[test]
    fn kinds_follow_variants() {
        assert_eq!(
            ApiError::invalid(TtsError::SpeakerOutOfRange(34)).body.kind,
            "SpeakerOutOfRange"
        );
        assert_eq!(ApiError::invalid(TtsError::EmptyText).body.kind, "EmptyText");
        let e = ApiError::from(PipelineError::SchemaViolation {
            key: "speed".into(),
            message: "unknown".into(),
        });
        assert_eq!(e.body.kind, "SchemaViolation");
        assert_eq!(e.body.key.as_deref(), Some("speed"));
    }
}

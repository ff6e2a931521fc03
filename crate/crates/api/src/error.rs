use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::{json, Value};

use sierra_core::auth::DenyReason;
use sierra_core::ml::{DatasetError, MlError};
use sierra_core::quest::{ParseError, ResponseError, ScoreError};
use sierra_core::store::StoreError;
use sierra_core::viz::VizError;

/// Error half of the `{ok, data | error}` envelope.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: impl Serialize) -> Self {
        self.details = serde_json::to_value(details).ok();
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    pub fn forbidden() -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", "not permitted for this role")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(d) = self.details {
            error["details"] = d;
        }
        (self.status, Json(json!({ "ok": false, "error": error }))).into_response()
    }
}

pub type ApiResult<T = Response> = Result<T, ApiError>;

pub fn ok(data: impl Serialize) -> Response {
    ok_with(StatusCode::OK, data)
}

pub fn ok_with(status: StatusCode, data: impl Serialize) -> Response {
    (status, Json(json!({ "ok": true, "data": data }))).into_response()
}

impl From<DenyReason> for ApiError {
    fn from(r: DenyReason) -> Self {
        match r {
            DenyReason::NoSession => ApiError::unauthorized("missing or unknown session token"),
            DenyReason::Expired => ApiError::unauthorized("session expired"),
            DenyReason::Forbidden => ApiError::forbidden(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::UnknownSubject(_)
            | StoreError::UnknownChannel(..)
            | StoreError::UnknownQuestionnaire(_) => ApiError::not_found(msg),
            StoreError::DuplicateSubject(_) => ApiError::conflict("duplicate_subject", msg),
            StoreError::DuplicateQuestionnaire(..) => ApiError::conflict("duplicate_questionnaire", msg),
            StoreError::BatchTooLarge(_) | StoreError::EmptyBatch | StoreError::InvalidWindow(..) => {
                ApiError::bad_request("invalid_request", msg)
            }
            StoreError::StoreClosed => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "store_closed", msg),
            StoreError::MissingMasterKey
            | StoreError::Crypto(_)
            | StoreError::Corrupt(_)
            | StoreError::Io(_) => {
                tracing::error!("store failure: {msg}");
                ApiError::internal("storage failure")
            }
        }
    }
}

impl From<VizError> for ApiError {
    fn from(e: VizError) -> Self {
        match e {
            VizError::UnknownPlugin(id) => ApiError::not_found(format!("unknown plugin `{id}`")),
            VizError::BadParams(issues) => {
                ApiError::bad_request("invalid_params", "invalid plugin parameters").with_details(issues)
            }
            VizError::Store(s) => s.into(),
            e @ (VizError::DuplicatePluginId(_) | VizError::InvalidDescriptor(_)) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        ApiError::bad_request("parse_error", e.to_string()).with_details(e)
    }
}

impl From<ResponseError> for ApiError {
    fn from(e: ResponseError) -> Self {
        ApiError::bad_request("invalid_response", "response failed validation").with_details(e.issues)
    }
}

impl From<ScoreError> for ApiError {
    fn from(e: ScoreError) -> Self {
        ApiError::bad_request("score_error", e.to_string())
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        ApiError::bad_request("invalid_dataset", e.to_string())
    }
}

impl From<MlError> for ApiError {
    fn from(e: MlError) -> Self {
        ApiError::bad_request("invalid_model", e.to_string())
    }
}

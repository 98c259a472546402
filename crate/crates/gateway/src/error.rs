use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use canvas_core::ErrorKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Core(#[from] canvas_core::Error),
    #[error("invalid request: {message}")]
    InvalidRequest { message: String, details: Value },
    #[error("no route for {0}")]
    RouteNotFound(String),
    #[error("method not allowed")]
    MethodNotAllowed,
    #[error("port {port} is already in use")]
    PortInUse { port: u16 },
    #[error("storage at {path} is not usable: {source}")]
    StorageUnwritable {
        path: String,
        #[source]
        source: canvas_core::Error,
    },
    #[error("cannot read {path}: {source}")]
    Input {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("evaluation job {job_id} failed: {diagnostics}")]
    JobFailed { job_id: String, diagnostics: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("internal task failed: {0}")]
    Task(String),
}

/// Wire form of every error the API and CLI report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

impl GatewayError {
    pub fn invalid(message: impl Into<String>) -> Self {
        GatewayError::InvalidRequest {
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Core(e) => e.code(),
            GatewayError::InvalidRequest { .. } => "InvalidRequest",
            GatewayError::RouteNotFound(_) => "NotFound",
            GatewayError::MethodNotAllowed => "MethodNotAllowed",
            GatewayError::PortInUse { .. } => "PortInUse",
            GatewayError::StorageUnwritable { .. } => "StorageUnwritable",
            GatewayError::Input { .. } | GatewayError::Io(_) => "IoError",
            GatewayError::JobFailed { .. } => "JobFailed",
            GatewayError::Task(_) => "InternalError",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            GatewayError::Core(e) => match e.kind() {
                ErrorKind::Invalid => StatusCode::BAD_REQUEST,
                ErrorKind::NotFound => StatusCode::NOT_FOUND,
                ErrorKind::Conflict => StatusCode::CONFLICT,
                ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            },
            GatewayError::InvalidRequest { .. } | GatewayError::Input { .. } => StatusCode::BAD_REQUEST,
            GatewayError::RouteNotFound(_) => StatusCode::NOT_FOUND,
            GatewayError::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let details = match self {
            GatewayError::Core(e) => e.details(),
            GatewayError::InvalidRequest { details, .. } => details.clone(),
            GatewayError::RouteNotFound(path) => serde_json::json!({ "path": path }),
            GatewayError::PortInUse { port } => serde_json::json!({ "port": port }),
            GatewayError::JobFailed { job_id, diagnostics } => {
                serde_json::json!({ "job_id": job_id, "diagnostics": diagnostics })
            }
            GatewayError::StorageUnwritable { path, .. } | GatewayError::Input { path, .. } => {
                serde_json::json!({ "path": path })
            }
            _ => Value::Null,
        };
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            details,
        }
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            log::error!("{self}");
        }
        (self.status(), Json(self.body())).into_response()
    }
}

/// Turns a serde_json failure into a 400 that says where the body went wrong.
pub fn body_error(e: &serde_json::Error) -> GatewayError {
    GatewayError::InvalidRequest {
        message: format!("malformed request body: {e}"),
        details: serde_json::json!({
            "line": e.line(),
            "column": e.column(),
            "category": format!("{:?}", e.classify()).to_lowercase(),
        }),
    }
}

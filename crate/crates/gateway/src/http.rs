//! HTTP API. Handlers decode the request, run the matching [`crate::ops`]
//! function on a blocking thread and encode the result.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, delete, get, post};
use axum::{Json, Router};
use canvas_core::feedback::RankingSubmission;
use canvas_core::ingestion::{to_jsonl, InputFile};
use canvas_core::{Canvas, CanvasConfig, PageRequest};
use serde::Serialize;
use tower_http::services::{ServeDir, ServeFile};

use crate::error::{GatewayError, Result};
use crate::ops::{self, CompareRequest, CreateRunRequest, EvaluateRequest, GroupsRequest, SearchRequest};

const BODY_LIMIT: usize = 512 * 1024 * 1024;
const NDJSON: &str = "application/x-ndjson";

pub type AppState = Arc<Canvas>;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub db: PathBuf,
    pub canvas: CanvasConfig,
    /// Built UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
}

async fn blocking<T, F>(state: AppState, f: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce(&Canvas) -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| GatewayError::Task(e.to_string()))?
}

/// JSON body whose decoding failures become structured 400s.
pub struct JsonBody<T>(pub T);

impl<S, T> FromRequest<S> for JsonBody<T>
where
    S: Send + Sync,
    T: serde::de::DeserializeOwned,
{
    type Rejection = GatewayError;

    async fn from_request(req: Request, state: &S) -> Result<Self> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| GatewayError::invalid(e.body_text()))?;
        ops::parse_json(&bytes).map(JsonBody)
    }
}

fn ndjson<T: Serialize>(records: &[T]) -> Response {
    ([(header::CONTENT_TYPE, NDJSON)], to_jsonl(records)).into_response()
}

fn page_from(q: &HashMap<String, String>) -> Result<PageRequest> {
    let num = |key: &str, default: usize| -> Result<usize> {
        match q.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| GatewayError::InvalidRequest {
                message: format!("query parameter '{key}' must be a positive integer"),
                details: serde_json::json!({ "field": key, "value": v }),
            }),
        }
    };
    let defaults = PageRequest::default();
    Ok(PageRequest {
        page: num("page", defaults.page)?,
        page_size: num("page_size", defaults.page_size)?,
    })
}

fn flag(v: Option<&String>) -> bool {
    v.is_some_and(|v| matches!(v.to_ascii_lowercase().as_str(), "1" | "true" | "yes"))
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/runs", post(create_run).get(list_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/instances", post(add_instances).get(list_instances))
        .route("/api/runs/{id}/ingest", post(ingest))
        .route("/api/runs/{id}/annotations", post(annotations))
        .route("/api/runs/{id}/evaluate", post(evaluate))
        .route("/api/runs/{id}/summary", get(summary))
        .route("/api/runs/{id}/export", get(export_run))
        .route("/api/runs/{id}/import", post(import_run))
        .route("/api/jobs/{id}", get(job))
        .route("/api/search", post(search))
        .route("/api/dashboard/compare", post(compare))
        .route("/api/groups", get(groups))
        .route("/api/feedback/ranking", post(ranking))
        .route("/api/feedback/export", get(export_feedback))
        .route("/api/feedback/{session_id}", delete(revoke))
        .route("/api", any(not_found))
        .route("/api/{*rest}", any(not_found))
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    match ui_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api.fallback(not_found),
    }
}

/// Opens the store, binds the port and serves until interrupted.
pub async fn serve(config: ServeConfig) -> Result<()> {
    let db = config.db.clone();
    let canvas = tokio::task::spawn_blocking(move || Canvas::open(&db, config.canvas))
        .await
        .map_err(|e| GatewayError::Task(e.to_string()))?
        .map_err(|source| GatewayError::StorageUnwritable {
            path: config.db.display().to_string(),
            source,
        })?;
    let addr: SocketAddr = format!("{}:{}", config.host, config.port)
        .parse()
        .map_err(|_| GatewayError::invalid(format!("bad listen address {}:{}", config.host, config.port)))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => GatewayError::PortInUse { port: config.port },
        _ => GatewayError::Io(e),
    })?;
    log::info!("listening on http://{}", listener.local_addr()?);
    let app = router(Arc::new(canvas), config.ui_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn not_found(uri: Uri) -> GatewayError {
    GatewayError::RouteNotFound(uri.path().to_string())
}

async fn method_not_allowed() -> GatewayError {
    GatewayError::MethodNotAllowed
}

async fn health(State(s): State<AppState>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, ops::health).await?))
}

async fn create_run(State(s): State<AppState>, JsonBody(req): JsonBody<CreateRunRequest>) -> Result<impl IntoResponse> {
    let run = blocking(s, move |c| ops::create_run(c, &req)).await?;
    Ok((StatusCode::CREATED, Json(run)))
}

async fn list_runs(State(s): State<AppState>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, ops::list_runs).await?))
}

async fn get_run(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, move |c| ops::get_run(c, &id)).await?))
}

async fn list_instances(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<impl IntoResponse> {
    let page = page_from(&q)?;
    Ok(Json(blocking(s, move |c| ops::list_instances(c, &id, page)).await?))
}

async fn add_instances(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse> {
    let req = ops::parse_json(&body)?;
    Ok(Json(blocking(s, move |c| ops::add_instances(c, &id, req)).await?))
}

/// Multipart upload: a `spec` field holding the extraction spec as JSON,
/// an optional `dry_run` field, and the files in the order the extraction spec refers
/// to them.
async fn ingest(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    mut form: Multipart,
) -> Result<impl IntoResponse> {
    let mut spec = None;
    let mut dry_run = flag(q.get("dry_run"));
    let mut files = Vec::new();
    while let Some(field) = form.next_field().await.map_err(|e| GatewayError::invalid(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| GatewayError::invalid(e.body_text()))?;
        match name.as_str() {
            "spec" => spec = Some(String::from_utf8_lossy(&bytes).into_owned()),
            "dry_run" => dry_run = flag(Some(&String::from_utf8_lossy(&bytes).into_owned())),
            _ => files.push(InputFile::new(file_name.unwrap_or(name), bytes.to_vec())),
        }
    }
    let spec = spec.ok_or_else(|| GatewayError::InvalidRequest {
        message: "multipart field 'spec' is required".into(),
        details: serde_json::json!({ "field": "spec" }),
    })?;
    Ok(Json(blocking(s, move |c| ops::ingest(c, &id, &spec, &files, dry_run)).await?))
}

/// Adapter-format records, either as the raw body or as a multipart `file`
/// field. The origin comes from `?origin=` or a multipart `origin` field.
async fn annotations(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    req: Request,
) -> Result<impl IntoResponse> {
    let mut origin = q.get("origin").cloned();
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let text = if is_multipart {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| GatewayError::invalid(e.body_text()))?;
        let mut text = String::new();
        while let Some(field) = form.next_field().await.map_err(|e| GatewayError::invalid(e.body_text()))? {
            let name = field.name().unwrap_or_default().to_string();
            let value = field.text().await.map_err(|e| GatewayError::invalid(e.body_text()))?;
            if name == "origin" {
                origin = Some(value);
            } else {
                text.push_str(&value);
                text.push('\n');
            }
        }
        text
    } else {
        let bytes = Bytes::from_request(req, &())
            .await
            .map_err(|e| GatewayError::invalid(e.body_text()))?;
        String::from_utf8(bytes.to_vec()).map_err(|_| canvas_core::Error::NonTextPayload { field: "body".into() })?
    };
    let origin = origin.ok_or_else(|| GatewayError::InvalidRequest {
        message: "an 'origin' is required".into(),
        details: serde_json::json!({ "field": "origin" }),
    })?;
    Ok(Json(blocking(s, move |c| ops::ingest_annotations(c, &id, &origin, &text)).await?))
}

async fn evaluate(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse> {
    let req: EvaluateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        EvaluateRequest::default()
    } else {
        ops::parse_json(&body)?
    };
    let job = blocking(s, move |c| ops::evaluate(c, &id, &req)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn job(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, move |c| ops::job(c, &id)).await?))
}

async fn search(State(s): State<AppState>, JsonBody(req): JsonBody<SearchRequest>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, move |c| ops::search(c, &req)).await?))
}

async fn summary(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, move |c| ops::summary(c, &id)).await?))
}

async fn compare(State(s): State<AppState>, JsonBody(req): JsonBody<CompareRequest>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, move |c| ops::compare(c, &req)).await?))
}

async fn groups(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Result<impl IntoResponse> {
    let req = GroupsRequest {
        run_ids: q.get("run_ids").map(|v| ops::split_csv(v)).unwrap_or_default(),
        page: page_from(&q)?,
    };
    Ok(Json(blocking(s, move |c| ops::groups(c, &req)).await?))
}

async fn ranking(State(s): State<AppState>, JsonBody(req): JsonBody<RankingSubmission>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, move |c| ops::submit_ranking(c, &req)).await?))
}

async fn revoke(State(s): State<AppState>, Path(session): Path<String>) -> Result<impl IntoResponse> {
    Ok(Json(blocking(s, move |c| ops::revoke_feedback(c, &session)).await?))
}

async fn export_feedback(State(s): State<AppState>) -> Result<Response> {
    Ok(ndjson(&blocking(s, ops::export_feedback).await?))
}

async fn export_run(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    Ok(ndjson(&blocking(s, move |c| ops::export_run(c, &id)).await?))
}

async fn import_run(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| canvas_core::Error::NonTextPayload { field: "body".into() })?;
    Ok(Json(blocking(s, move |c| ops::import_run(c, &id, &text)).await?))
}

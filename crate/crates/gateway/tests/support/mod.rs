#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use canvas_core::metrics::{AdapterConfig, AdapterTable};
use canvas_core::{Canvas, CanvasConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub const BOUNDARY: &str = "canvasboundary7MA4YWxk";

pub struct TestApp {
    pub dir: TempDir,
    pub canvas: Arc<Canvas>,
    pub router: Router,
}

impl TestApp {
    pub fn new() -> Self {
        Self::with_ui(None)
    }

    pub fn with_ui(ui_dir: Option<PathBuf>) -> Self {
        let dir = TempDir::new().unwrap();
        let mut adapters = AdapterTable::new();
        adapters.insert(
            "comet",
            AdapterConfig::new([
                "sh",
                "-c",
                r#"n=0; while read -r line; do echo "{\"index\":$n,\"score\":0.5}"; n=$((n+1)); done"#,
            ]),
        );
        let config = CanvasConfig {
            adapters,
            ..Default::default()
        };
        let canvas = Arc::new(Canvas::open(dir.path().join("canvas.db"), config).unwrap());
        let router = canvas_gateway::http::router(Arc::clone(&canvas), ui_dir);
        TestApp { dir, canvas, router }
    }

    pub fn db(&self) -> PathBuf {
        self.dir.path().join("canvas.db")
    }

    pub async fn raw(&self, method: &str, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(ct) = content_type {
            req = req.header("content-type", ct);
        }
        let resp = self.router.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (ct, bytes) = match body {
            Some(v) => (Some("application/json"), serde_json::to_vec(&v).unwrap()),
            None => (None, Vec::new()),
        };
        let (status, bytes) = self.raw(method, uri, ct, bytes).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn ok(&self, method: &str, uri: &str, body: Option<Value>) -> Value {
        let (status, value) = self.call(method, uri, body).await;
        assert!(status.is_success(), "{method} {uri} -> {status}: {value}");
        value
    }

    pub async fn create_run(&self, name: &str) -> String {
        let run = self
            .ok(
                "POST",
                "/api/runs",
                Some(serde_json::json!({"name": name, "source_lang": "zh", "target_lang": "en"})),
            )
            .await;
        run["id"].as_str().unwrap().to_string()
    }

    pub async fn wait_job(&self, id: &str) -> Value {
        for _ in 0..3000 {
            let job = self.ok("GET", &format!("/api/jobs/{id}"), None).await;
            if job["state"] == "done" || job["state"] == "failed" {
                return job;
            }
            tokio::time::sleep(std::time::Duration::from_millis(10)).await;
        }
        panic!("job {id} did not finish");
    }
}

/// Multipart body from (field name, optional file name, content) parts.
pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> (String, Vec<u8>) {
    let mut body = Vec::new();
    for (name, file, content) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match file {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\n\r\n").as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(content);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={BOUNDARY}"), body)
}

//! In-process HTTP helpers shared by the service and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use plaquekit::pipeline::Store;
use plaquekit::raster::io;
use plaquekit::synth::{render_plate, PlateSpec};
use plaquekit::welldetect::Layout;
use serde_json::Value;
use tower::ServiceExt;

pub const BOUNDARY: &str = "plaquekit-test-boundary";
pub const SCHEME: &str = r#"{"volume_ml": 0.1, "start_exponent": 2, "fold": 10}"#;

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn version(&self) -> Option<u64> {
        self.headers.get("x-plate-version")?.to_str().ok()?.parse().ok()
    }
}

pub fn app(store: Arc<Store>) -> Router {
    plaquekit_cli::server::router(store, None)
}

pub async fn send(app: &Router, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header("content-type", ct);
    }
    let resp = app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, None, Vec::new()).await
}

pub async fn post_json(app: &Router, uri: &str, body: &Value) -> Reply {
    send(
        app,
        Method::POST,
        uri,
        Some("application/json"),
        serde_json::to_vec(body).unwrap(),
    )
    .await
}

/// Multipart body from `(name, filename, bytes)` parts.
pub fn multipart(parts: &[(&str, Option<&str>, &[u8])]) -> (String, Vec<u8>) {
    let mut body = Vec::new();
    for (name, filename, bytes) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match filename {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: image/png\r\n\r\n")
                    .as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={BOUNDARY}"), body)
}

pub async fn upload(app: &Router, png: &[u8], layout: &str, scheme: &str) -> Reply {
    let (ct, body) = multipart(&[
        ("image", Some("plate.png"), png),
        ("layout", None, layout.as_bytes()),
        ("scheme", None, scheme.as_bytes()),
    ]);
    send(app, Method::POST, "/api/plates", Some(&ct), body).await
}

/// 2×3 synthetic plate, PNG encoded.
pub fn plate_png(counts: [usize; 6], seed: u64) -> Vec<u8> {
    let spec = PlateSpec {
        layout: Layout::new(2, 3).unwrap(),
        plaques_per_well: counts.to_vec(),
        seed,
        ..Default::default()
    };
    io::encode_png(&render_plate(&spec).unwrap().image).unwrap()
}

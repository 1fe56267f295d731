#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use http_body_util::BodyExt;
use micrographia::dataset::{split, DrawingKind, SplitFractions};
use micrographia::eval::ModelSpec;
use micrographia::experiment::{featurize_patients, train_artifact, TrainOptions};
use micrographia::imaging::RasterImage;
use micrographia::models::{serialize_model, LogRegParams};
use micrographia::pipeline::PipelineConfig;
use micrographia::synthetic::{render_exam, synthetic_cohort, SyntheticSpec, HIGH_TREMOR, LOW_TREMOR};
use micrographia::table::patients_of;
use micrographia_service::{router, AppState, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

/// Artifact bytes trained once per test binary on a small synthetic cohort.
pub fn artifact_bytes() -> &'static [u8] {
    static BYTES: OnceLock<Vec<u8>> = OnceLock::new();
    BYTES.get_or_init(|| {
        let cohort = synthetic_cohort(10, 10, 11).unwrap();
        let rows = featurize_patients(&cohort, &PipelineConfig::default()).rows;
        let assignment = split(&patients_of(&rows), SplitFractions::new(1.0, 0.0, 0.0).unwrap(), 11).unwrap();
        let options = TrainOptions { folds: 0, seed: 11, ..Default::default() };
        let spec = ModelSpec::Logreg(LogRegParams::default());
        let trained = train_artifact(&rows, &assignment, &[spec], &options).unwrap();
        serialize_model(&trained.artifact).unwrap()
    })
}

pub fn drawing_png(kind: DrawingKind, tremor: f64, seed: u64) -> Vec<u8> {
    let spec = SyntheticSpec { tremor_amplitude: tremor, ..Default::default() };
    render_exam(kind, &spec, seed).unwrap().to_png_bytes().unwrap()
}

pub fn pd_png(seed: u64) -> Vec<u8> {
    drawing_png(DrawingKind::Spiral, HIGH_TREMOR, seed)
}

pub fn healthy_png(seed: u64) -> Vec<u8> {
    drawing_png(DrawingKind::Spiral, LOW_TREMOR, seed)
}

pub fn blank_png() -> Vec<u8> {
    RasterImage::filled(320, 320, [255, 255, 255]).unwrap().to_png_bytes().unwrap()
}

pub struct Harness {
    pub app: Router,
    pub offset: Arc<AtomicI64>,
    pub dir: std::path::PathBuf,
}

pub fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()
}

pub fn config_in(dir: &Path) -> ServiceConfig {
    let artifact = dir.join("model.json");
    if !artifact.exists() {
        std::fs::write(&artifact, artifact_bytes()).unwrap();
    }
    ServiceConfig { artifact, store: dir.join("store"), ..Default::default() }
}

impl Harness {
    pub fn new(dir: &Path) -> Self {
        Self::with_config(dir, config_in(dir))
    }

    /// The clock starts at [`epoch`] and advances only through
    /// [`Harness::advance`].
    pub fn with_config(dir: &Path, config: ServiceConfig) -> Self {
        let offset = Arc::new(AtomicI64::new(0));
        let clock_offset = Arc::clone(&offset);
        let state = AppState::open(config)
            .unwrap()
            .with_clock(Arc::new(move || epoch() + Duration::seconds(clock_offset.load(Ordering::SeqCst))));
        Self { app: router(Arc::new(state)), offset, dir: dir.to_path_buf() }
    }

    pub fn advance(&self, secs: i64) {
        self.offset.fetch_add(secs, Ordering::SeqCst);
    }

    pub async fn send(&self, req: Request<Body>) -> (StatusCode, Vec<u8>, header::HeaderMap) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, body, headers)
    }

    pub async fn json(&self, req: Request<Body>) -> (StatusCode, Value) {
        let (status, body, _) = self.send(req).await;
        let value = if body.is_empty() { Value::Null } else { serde_json::from_slice(&body).unwrap() };
        (status, value)
    }

    pub async fn register(&self, login: &str, password: &str) -> StatusCode {
        let body = serde_json::json!({ "login": login, "password": password });
        self.json(post_json("/api/users", &body)).await.0
    }

    pub async fn login(&self, login: &str, password: &str) -> (StatusCode, Value) {
        let body = serde_json::json!({ "login": login, "password": password });
        self.json(post_json("/api/sessions", &body)).await
    }

    /// Registers (if needed) and returns a fresh bearer token.
    pub async fn user(&self, login: &str) -> String {
        let _ = self.register(login, "correct horse").await;
        let (status, body) = self.login(login, "correct horse").await;
        assert_eq!(status, StatusCode::OK, "{body}");
        body["token"].as_str().unwrap().to_string()
    }

    pub async fn submit(&self, token: &str, age: &str, gender: &str, images: &[(&str, Vec<u8>)]) -> (StatusCode, Value) {
        self.json(exam_request(token, age, gender, images)).await
    }

    pub async fn get(&self, token: Option<&str>, uri: &str) -> (StatusCode, Vec<u8>, header::HeaderMap) {
        let mut req = Request::builder().uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        self.send(req.body(Body::empty()).unwrap()).await
    }

    pub async fn get_json(&self, token: Option<&str>, uri: &str) -> (StatusCode, Value) {
        let (status, body, _) = self.get(token, uri).await;
        (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
    }
}

pub fn post_json(uri: &str, body: &Value) -> Request<Body> {
    Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(serde_json::to_vec(body).unwrap()))
        .unwrap()
}

const BOUNDARY: &str = "XtestBoundary7MA4YWxk";

pub fn multipart_body(text: &[(&str, &str)], files: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, value) in text {
        out.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes(),
        );
    }
    for (i, (name, bytes)) in files.iter().enumerate() {
        out.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"d{i}.png\"\r\nContent-Type: image/png\r\n\r\n"
            )
            .as_bytes(),
        );
        out.extend_from_slice(bytes);
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    out
}

pub fn exam_request(token: &str, age: &str, gender: &str, images: &[(&str, Vec<u8>)]) -> Request<Body> {
    let body = multipart_body(&[("age", age), ("gender", gender)], images);
    Request::builder()
        .method(Method::POST)
        .uri("/api/exams")
        .header(header::AUTHORIZATION, format!("Bearer {token}"))
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .header(header::CONTENT_LENGTH, body.len())
        .body(Body::from(body))
        .unwrap()
}

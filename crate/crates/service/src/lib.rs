//! HTTP assessment service: accounts, template download, exam submission and
//! exam history over a trained model artifact.
//!
//! The wire format is described in `book/src/reference/http.md`.

mod api;
pub mod auth;
pub mod config;
pub mod store;

use std::sync::Arc;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use micrographia::imaging::{generate_assessment_template, TemplateSpec};
use micrographia::models::{deserialize_model, ModelArtifact};
use sha2::{Digest, Sha256};

pub use api::router;
pub use config::ServiceConfig;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("store error: {0}")]
    Store(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Conflict(String),
    #[error("missing, invalid or expired session token")]
    Unauthorized,
    #[error("invalid login or password")]
    BadCredentials,
    #[error("this exam belongs to another user")]
    Forbidden,
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("upload exceeds the {0} byte limit")]
    PayloadTooLarge(usize),
    #[error("model error: {0}")]
    Model(#[from] micrographia::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unauthorized | ServiceError::BadCredentials => StatusCode::UNAUTHORIZED,
            ServiceError::Forbidden => StatusCode::FORBIDDEN,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::PayloadTooLarge(_) => StatusCode::PAYLOAD_TOO_LARGE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::BadCredentials => "bad_credentials",
            ServiceError::Forbidden => "forbidden",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Unprocessable(_) => "unprocessable",
            ServiceError::PayloadTooLarge(_) => "payload_too_large",
            _ => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = serde_json::json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Shared, read-mostly service state. The model artifact is never mutated.
pub struct AppState {
    pub config: ServiceConfig,
    pub artifact: Arc<ModelArtifact>,
    /// First 16 hex digits of the artifact file's SHA-256.
    pub model_version: String,
    pub store: store::Store,
    pub sessions: auth::Sessions,
    pub template_png: Vec<u8>,
    pub clock: Clock,
}

impl AppState {
    /// Loads the artifact (refusing to start without a valid one), opens the
    /// store and renders the printable template once.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let bytes = std::fs::read(&config.artifact).map_err(|e| {
            ServiceError::Config(format!("cannot read model artifact {}: {e}", config.artifact.display()))
        })?;
        let artifact = deserialize_model(&bytes)
            .map_err(|e| ServiceError::Config(format!("invalid model artifact {}: {e}", config.artifact.display())))?;
        let model_version = hex::encode(Sha256::digest(&bytes))[..16].to_string();
        let store = store::Store::open(&config.store)?;
        let template_png = generate_assessment_template(&TemplateSpec::default())?.to_png_bytes()?;
        Ok(Self {
            config,
            artifact: Arc::new(artifact),
            model_version,
            store,
            sessions: auth::Sessions::default(),
            template_png,
            clock: Arc::new(Utc::now),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }
}

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let listen = config.listen;
    let state = Arc::new(AppState::open(config)?);
    let app = router(state);
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

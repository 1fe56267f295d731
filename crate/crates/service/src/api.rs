use std::sync::Arc;

use axum::extract::multipart::MultipartError;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use micrographia::dataset::{DrawingKind, Gender, Label};
use micrographia::imaging::RasterImage;
use micrographia::pipeline::{assess_exam, ImageOutcome};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::auth::{hash_password, verify_password};
use crate::store::{ExamRecord, ImageResult, StoredImage, UserAccount};
use crate::{AppState, ServiceError};

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: Shared) -> Router {
    let limit = state.config.upload_limit;
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/users", post(register))
        .route("/api/sessions", post(login))
        .route("/api/template", get(template))
        .route("/api/exams", post(submit_exam).get(list_exams))
        .route("/api/exams/{exam_id}", get(get_exam))
        .route("/api/exams/{exam_id}/images/{image_id}", get(get_image))
        .layer(DefaultBodyLimit::max(limit))
        .layer(TraceLayer::new_for_http())
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn random_id() -> String {
    let bytes: [u8; 12] = rand::rng().random();
    hex::encode(bytes)
}

/// Caller resolved from `Authorization: Bearer <token>`.
struct AuthUser(String);

impl FromRequestParts<Shared> for AuthUser {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ServiceError::Unauthorized)?;
        state.sessions.resolve(token.trim(), state.now()).map(AuthUser).ok_or(ServiceError::Unauthorized)
    }
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    model: &'static str,
    model_version: String,
    threshold: f64,
}

async fn health(State(st): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok",
        model: st.artifact.classifier.kind(),
        model_version: st.model_version.clone(),
        threshold: st.artifact.classifier.threshold(),
    })
}

#[derive(Deserialize)]
struct Credentials {
    login: String,
    password: String,
}

#[derive(Serialize)]
struct UserView {
    user_id: String,
    login: String,
    created_at: DateTime<Utc>,
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    body.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn register(
    State(st): State<Shared>,
    body: Result<Json<Credentials>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<UserView>)> {
    let c = json_body(body)?;
    let login = c.login.trim().to_string();
    if login.is_empty()
        || login.len() > 64
        || !login.chars().all(|ch| ch.is_ascii_alphanumeric() || "._@-".contains(ch))
    {
        return Err(ServiceError::BadRequest("login must be 1-64 characters of [A-Za-z0-9._@-]".into()));
    }
    if c.password.chars().count() < 8 {
        return Err(ServiceError::BadRequest("password must have at least 8 characters".into()));
    }
    let credential = tokio::task::spawn_blocking(move || hash_password(&c.password))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let user = UserAccount { user_id: random_id(), login, credential, created_at: st.now() };
    st.store.insert_user(user.clone())?;
    tracing::info!(user_id = %user.user_id, "registered");
    Ok((StatusCode::CREATED, Json(UserView { user_id: user.user_id, login: user.login, created_at: user.created_at })))
}

#[derive(Serialize)]
struct TokenView {
    token: String,
    token_type: &'static str,
    expires_at: DateTime<Utc>,
}

async fn login(State(st): State<Shared>, body: Result<Json<Credentials>, JsonRejection>) -> ApiResult<Json<TokenView>> {
    let c = json_body(body)?;
    let user = st.store.user_by_login(c.login.trim());
    let stored = user.as_ref().map(|u| u.credential.clone());
    let ok = tokio::task::spawn_blocking(move || stored.is_some_and(|s| verify_password(&c.password, &s)))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let user = user.filter(|_| ok).ok_or(ServiceError::BadCredentials)?;
    let (token, expires_at) = st.sessions.issue(&user.user_id, st.now(), st.config.token_ttl);
    Ok(Json(TokenView { token, token_type: "Bearer", expires_at }))
}

async fn template(State(st): State<Shared>) -> Response {
    (
        [
            (header::CONTENT_TYPE, "image/png"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"assessment.png\""),
        ],
        st.template_png.clone(),
    )
        .into_response()
}

fn multipart_error(e: MultipartError, limit: usize) -> ServiceError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ServiceError::PayloadTooLarge(limit)
    } else {
        ServiceError::BadRequest(format!("malformed multipart body: {}", e.body_text()))
    }
}

fn sniff_content_type(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        Some("image/png")
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        Some("image/jpeg")
    } else {
        None
    }
}

#[derive(Serialize)]
struct ExamView {
    #[serde(flatten)]
    record: ExamRecord,
    image_urls: Vec<String>,
}

fn exam_view(record: ExamRecord) -> ExamView {
    let image_urls =
        record.images.iter().map(|i| format!("/api/exams/{}/images/{}", record.exam_id, i.image_id)).collect();
    ExamView { record, image_urls }
}

/// Multipart fields: `age`, `gender`, and 1 to 8 image parts named `spiral`,
/// `meander` or `image`.
async fn submit_exam(
    State(st): State<Shared>,
    AuthUser(user_id): AuthUser,
    mut form: Multipart,
) -> ApiResult<(StatusCode, Json<ExamView>)> {
    let limit = st.config.upload_limit;
    let mut age = None;
    let mut gender = None;
    let mut uploads: Vec<(Option<DrawingKind>, Vec<u8>)> = Vec::new();
    while let Some(field) = form.next_field().await.map_err(|e| multipart_error(e, limit))? {
        let name = field.name().unwrap_or_default().to_string();
        let data = field.bytes().await.map_err(|e| multipart_error(e, limit))?;
        match name.as_str() {
            "age" => age = Some(String::from_utf8_lossy(&data).trim().to_string()),
            "gender" => gender = Some(String::from_utf8_lossy(&data).trim().to_string()),
            "spiral" => uploads.push((Some(DrawingKind::Spiral), data.to_vec())),
            "meander" => uploads.push((Some(DrawingKind::Meander), data.to_vec())),
            "image" => uploads.push((None, data.to_vec())),
            other => return Err(ServiceError::BadRequest(format!("unexpected field `{other}`"))),
        }
    }
    let age: f64 = age
        .ok_or_else(|| ServiceError::BadRequest("missing age".into()))?
        .parse()
        .ok()
        .filter(|a: &f64| *a > 0.0 && a.is_finite() && *a < 150.0)
        .ok_or_else(|| ServiceError::BadRequest("age must be a positive number of years".into()))?;
    let gender: Gender = gender
        .ok_or_else(|| ServiceError::BadRequest("missing gender".into()))?
        .parse()
        .map_err(|_| ServiceError::BadRequest("gender must be `male` or `female`".into()))?;
    if uploads.is_empty() || uploads.len() > 8 {
        return Err(ServiceError::BadRequest(format!("an exam needs 1 to 8 images, got {}", uploads.len())));
    }
    let mut images = Vec::with_capacity(uploads.len());
    let mut stored = Vec::with_capacity(uploads.len());
    for (i, (kind, bytes)) in uploads.iter().enumerate() {
        let content_type = sniff_content_type(bytes)
            .ok_or_else(|| ServiceError::BadRequest(format!("image {} is not a PNG or JPEG", i + 1)))?;
        let img = RasterImage::decode(bytes)
            .map_err(|e| ServiceError::BadRequest(format!("image {} cannot be decoded: {e}", i + 1)))?;
        images.push(img);
        stored.push((*kind, content_type));
    }

    let artifact = Arc::clone(&st.artifact);
    let assessment = tokio::task::spawn_blocking(move || assess_exam(&artifact, &images, age, gender))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(|e| match e {
            micrographia::Error::Validation(_) => {
                ServiceError::Unprocessable("no uploaded image yielded a usable drawing trace".into())
            }
            micrographia::Error::InvalidArgument(m) => ServiceError::BadRequest(m),
            other => ServiceError::Model(other),
        })?;

    let mut image_refs = Vec::with_capacity(uploads.len());
    for ((_, bytes), (kind, content_type)) in uploads.iter().zip(&stored) {
        let image_id = st.store.put_blob(bytes)?;
        image_refs.push(StoredImage { image_id, kind: *kind, content_type: content_type.to_string() });
    }
    let per_image = image_refs
        .iter()
        .zip(&assessment.per_image)
        .map(|(r, o)| match o {
            ImageOutcome::Scored { probability, label } => {
                ImageResult::Scored { image_id: r.image_id.clone(), probability: *probability, label: *label }
            }
            ImageOutcome::Failed { error } => ImageResult::Failed { image_id: r.image_id.clone(), error: error.clone() },
        })
        .collect();
    let record = ExamRecord {
        exam_id: random_id(),
        user_id,
        submitted_at: st.now(),
        age,
        gender,
        images: image_refs,
        per_image,
        verdict: assessment.verdict,
        verdict_probability: assessment.verdict_probability,
        threshold: st.artifact.classifier.threshold(),
        low_confidence: assessment.low_confidence,
        model_version: st.model_version.clone(),
    };
    st.store.insert_exam(record.clone())?;
    tracing::info!(exam_id = %record.exam_id, verdict = %record.verdict, "exam scored");
    Ok((StatusCode::CREATED, Json(exam_view(record))))
}

#[derive(Serialize)]
struct ExamSummary {
    exam_id: String,
    submitted_at: DateTime<Utc>,
    age: f64,
    gender: Gender,
    verdict: Label,
    verdict_probability: f64,
    low_confidence: bool,
    image_count: usize,
    thumbnail_url: Option<String>,
}

#[derive(Serialize)]
struct ExamList {
    exams: Vec<ExamSummary>,
}

async fn list_exams(State(st): State<Shared>, AuthUser(user_id): AuthUser) -> Json<ExamList> {
    let exams = st
        .store
        .exams_of(&user_id)
        .into_iter()
        .map(|e| ExamSummary {
            thumbnail_url: e.images.first().map(|i| format!("/api/exams/{}/images/{}", e.exam_id, i.image_id)),
            exam_id: e.exam_id,
            submitted_at: e.submitted_at,
            age: e.age,
            gender: e.gender,
            verdict: e.verdict,
            verdict_probability: e.verdict_probability,
            low_confidence: e.low_confidence,
            image_count: e.images.len(),
        })
        .collect();
    Json(ExamList { exams })
}

fn owned_exam(st: &AppState, user_id: &str, exam_id: &str) -> ApiResult<ExamRecord> {
    let exam = st.store.exam(exam_id).ok_or_else(|| ServiceError::NotFound("exam".into()))?;
    if exam.user_id != user_id {
        return Err(ServiceError::Forbidden);
    }
    Ok(exam)
}

async fn get_exam(
    State(st): State<Shared>,
    AuthUser(user_id): AuthUser,
    Path(exam_id): Path<String>,
) -> ApiResult<Json<ExamView>> {
    Ok(Json(exam_view(owned_exam(&st, &user_id, &exam_id)?)))
}

async fn get_image(
    State(st): State<Shared>,
    AuthUser(user_id): AuthUser,
    Path((exam_id, image_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let exam = owned_exam(&st, &user_id, &exam_id)?;
    let img = exam
        .images
        .iter()
        .find(|i| i.image_id == image_id)
        .ok_or_else(|| ServiceError::NotFound("image".into()))?;
    let bytes = st.store.blob(&img.image_id)?;
    Ok(([(header::CONTENT_TYPE, img.content_type.clone())], bytes).into_response())
}

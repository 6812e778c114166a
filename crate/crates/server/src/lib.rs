//! HTTP+JSON API over the scene store.
//!
//! Handlers hand blocking store work to tokio's blocking pool; generation
//! jobs run on the store's own worker threads and are observed by polling.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use scenewright_core::model::{AssetKind, CastAssignment};
use scenewright_core::pipeline::{Engine, LineEdit, PipelineError};
use scenewright_core::store::Studio;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub port: u16,
}

impl ServerConfig {
    /// `S2S_DATA_DIR` (default `./data`) and `S2S_PORT` (default 8080).
    pub fn from_env() -> Result<Self, String> {
        let data_dir = std::env::var("S2S_DATA_DIR").map(PathBuf::from).unwrap_or_else(|_| PathBuf::from("data"));
        let port = match std::env::var("S2S_PORT") {
            Ok(p) => p.parse().map_err(|_| format!("S2S_PORT must be a port number, got {p:?}"))?,
            Err(_) => DEFAULT_PORT,
        };
        Ok(Self { data_dir, port })
    }
}

/// An error body: `{"error": {"code", "message", "detail"?}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(detail) = self.detail {
            error["detail"] = detail;
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            PipelineError::SceneNotFound(_) => (StatusCode::NOT_FOUND, "scene_not_found"),
            PipelineError::JobNotFound(_) => (StatusCode::NOT_FOUND, "job_not_found"),
            PipelineError::AssetNotFound(_) => (StatusCode::NOT_FOUND, "asset_not_found"),
            PipelineError::IndexOutOfRange { .. } => (StatusCode::NOT_FOUND, "index_out_of_range"),
            PipelineError::CastIncomplete(_) => (StatusCode::UNPROCESSABLE_ENTITY, "cast_incomplete"),
            PipelineError::UnknownModel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_model"),
            PipelineError::UnknownStyle(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_style"),
            PipelineError::InvalidEdit(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_edit"),
            PipelineError::EmptyScript => (StatusCode::UNPROCESSABLE_ENTITY, "empty_script"),
            PipelineError::NoDialogueFound => (StatusCode::UNPROCESSABLE_ENTITY, "no_dialogue_found"),
            PipelineError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            PipelineError::Annotation(_) => (StatusCode::BAD_GATEWAY, "annotation_provider_error"),
            PipelineError::SpeechUnavailable(_) => (StatusCode::BAD_GATEWAY, "speech_provider_error"),
            PipelineError::CorruptBundle(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_bundle"),
            PipelineError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_error"),
        };
        let detail = match e {
            PipelineError::CastIncomplete(missing) => Some(json!({ "missing": missing })),
            PipelineError::IndexOutOfRange { index, lines } => Some(json!({ "index": index, "lines": lines })),
            _ => None,
        };
        Self { status, code, message, detail }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(studio: &Arc<Studio>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Studio) -> Result<T, PipelineError> + Send + 'static,
{
    let studio = Arc::clone(studio);
    tokio::task::spawn_blocking(move || f(&studio))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Deserialize)]
struct CreateBody {
    script: String,
}

#[derive(Deserialize)]
struct GenerateBody {
    cast: CastAssignment,
}

async fn create_scene(State(studio): State<Arc<Studio>>, body: Result<Json<CreateBody>, JsonRejection>) -> ApiResult<Response> {
    let Json(body) = body?;
    let created = blocking(&studio, move |s| s.create_scene(&body.script)).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn list_scenes(State(studio): State<Arc<Studio>>) -> ApiResult<Response> {
    let scenes = blocking(&studio, |s| Ok(s.list_scenes())).await?;
    Ok(Json(scenes).into_response())
}

async fn get_scene(State(studio): State<Arc<Studio>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bundle = blocking(&studio, move |s| s.get_scene(&id)).await?;
    Ok(Json(bundle).into_response())
}

async fn generate(
    State(studio): State<Arc<Studio>>,
    Path(id): Path<String>,
    body: Result<Json<GenerateBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let job_id = blocking(&studio, move |s| s.generate_scene(&id, body.cast)).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "jobId": job_id }))).into_response())
}

async fn get_job(State(studio): State<Arc<Studio>>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = studio.get_job(&id)?;
    Ok(Json(job).into_response())
}

async fn update_line(
    State(studio): State<Arc<Studio>>,
    Path((id, index)): Path<(String, usize)>,
    body: Result<Json<LineEdit>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(edit) = body?;
    let update = blocking(&studio, move |s| s.update_line(&id, index, &edit)).await?;
    Ok((StatusCode::ACCEPTED, Json(update)).into_response())
}

async fn asset(studio: Arc<Studio>, id: String, index: usize, kind: AssetKind) -> ApiResult<Response> {
    let bytes = blocking(&studio, move |s| s.get_asset(&id, kind, index)).await?;
    Ok(([(header::CONTENT_TYPE, kind.content_type())], bytes).into_response())
}

async fn get_audio(State(studio): State<Arc<Studio>>, Path((id, index)): Path<(String, usize)>) -> ApiResult<Response> {
    asset(studio, id, index, AssetKind::Audio).await
}

async fn get_motion(State(studio): State<Arc<Studio>>, Path((id, index)): Path<(String, usize)>) -> ApiResult<Response> {
    asset(studio, id, index, AssetKind::Motion).await
}

async fn get_anim(State(studio): State<Arc<Studio>>, Path((id, index)): Path<(String, usize)>) -> ApiResult<Response> {
    asset(studio, id, index, AssetKind::Anim).await
}

async fn get_camera(State(studio): State<Arc<Studio>>, Path((id, index)): Path<(String, usize)>) -> ApiResult<Response> {
    asset(studio, id, index, AssetKind::Camera).await
}

async fn list_voices(State(studio): State<Arc<Studio>>) -> ApiResult<Response> {
    let voices = blocking(&studio, |s| s.list_voices()).await?;
    Ok(Json(voices).into_response())
}

async fn list_characters(State(studio): State<Arc<Studio>>) -> ApiResult<Response> {
    Ok(Json(studio.list_characters()).into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(studio: Arc<Studio>) -> Router {
    Router::new()
        .route("/api/scenes", post(create_scene).get(list_scenes))
        .route("/api/scenes/{id}", get(get_scene))
        .route("/api/scenes/{id}/generate", post(generate))
        .route("/api/scenes/{id}/lines/{n}", axum::routing::patch(update_line))
        .route("/api/scenes/{id}/lines/{n}/audio", get(get_audio))
        .route("/api/scenes/{id}/lines/{n}/motion", get(get_motion))
        .route("/api/scenes/{id}/lines/{n}/anim", get(get_anim))
        .route("/api/scenes/{id}/lines/{n}/camera", get(get_camera))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/voices", get(list_voices))
        .route("/api/characters", get(list_characters))
        .fallback(not_found)
        .with_state(studio)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, studio: Arc<Studio>) -> std::io::Result<()> {
    axum::serve(listener, router(studio))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Opens the store with an environment-configured engine and serves on
/// all interfaces.
pub fn run(config: ServerConfig, engine: Engine) -> Result<(), String> {
    let studio = Arc::new(Studio::open(&config.data_dir, engine).map_err(|e| e.to_string())?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("cannot bind {addr}: {e}"))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| e.to_string())?);
        serve(listener, studio).await.map_err(|e| e.to_string())
    })
}

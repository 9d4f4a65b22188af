//! HTTP session service for interactive GrabCut annotation.
//!
//! Each session holds one uploaded image. Clients set a bounding box, add
//! scribbles, run rounds and fetch the mask as PGM. Sessions live in memory
//! and expire after a period without access.

mod error;
mod store;

pub use error::{ApiError, ErrorBody};
pub use store::{session_seed, SessionRecord, SessionStore};

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use attnclust_core::grabcut::{decode_image, GrabcutParams, GrabcutSession, Rect, Stroke};

pub const DEFAULT_TTL: Duration = Duration::from_secs(3600);
const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub ttl: Duration,
    pub ui_dir: Option<PathBuf>,
    pub grabcut: GrabcutParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            ttl: DEFAULT_TTL,
            ui_dir: None,
            grabcut: GrabcutParams::default(),
        }
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<SessionStore>,
    grabcut: GrabcutParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedSession {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevisionResponse {
    pub revision: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrokesRequest {
    pub strokes: Vec<Stroke>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateRequest {
    pub rounds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateResponse {
    pub revision: u64,
    pub foreground: usize,
    pub rounds_run: usize,
    pub converged: bool,
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub revision: u64,
    pub seed: u64,
    pub bbox: Option<Rect>,
    pub has_mask: bool,
    pub foreground: Option<usize>,
    pub energy_history: Vec<f64>,
}

/// Strict JSON body parsing with our error shape instead of axum's
/// plain-text rejection.
fn parse_json<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let image = decode_image(&body)?;
    let (width, height) = (image.width(), image.height());
    let id = app.store.insert(image);
    Ok((StatusCode::CREATED, Json(CreatedSession { id, width, height })).into_response())
}

async fn get_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionSummary>, ApiError> {
    let entry = app.store.get(&id)?;
    let rec = entry.read().await;
    Ok(Json(rec.summary()))
}

async fn delete_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    app.store.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn set_bbox(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<RevisionResponse>, ApiError> {
    let bbox: Rect = parse_json(&body)?;
    let entry = app.store.get(&id)?;
    let mut rec = entry.write_owned().await;
    let params = app.grabcut.clone();
    let revision = tokio::task::spawn_blocking(move || -> Result<u64, ApiError> {
        let session = GrabcutSession::new(rec.image.clone(), bbox, params, rec.seed)?;
        rec.bbox = Some(bbox);
        rec.grabcut = Some(session);
        rec.revision += 1;
        Ok(rec.revision)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(RevisionResponse { revision }))
}

async fn add_strokes(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<RevisionResponse>, ApiError> {
    let req: StrokesRequest = parse_json(&body)?;
    let entry = app.store.get(&id)?;
    let mut rec = entry.write().await;
    let session = rec
        .grabcut
        .as_mut()
        .ok_or_else(|| ApiError::conflict("set a bounding box before adding strokes"))?;
    session.add_strokes(&req.strokes)?;
    rec.revision += 1;
    Ok(Json(RevisionResponse {
        revision: rec.revision,
    }))
}

async fn iterate(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<IterateResponse>, ApiError> {
    let req: IterateRequest = parse_json(&body)?;
    let entry = app.store.get(&id)?;
    let mut rec = entry.write_owned().await;
    if rec.grabcut.is_none() {
        return Err(ApiError::conflict("set a bounding box before iterating"));
    }
    tokio::task::spawn_blocking(move || -> Result<IterateResponse, ApiError> {
        let session = rec.grabcut.as_mut().expect("checked above");
        let summary = session.iterate(req.rounds)?;
        let energy = session.energy_history().last().copied();
        rec.revision += 1;
        Ok(IterateResponse {
            revision: rec.revision,
            foreground: summary.foreground,
            rounds_run: summary.rounds_run,
            converged: summary.converged,
            energy,
        })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map(Json)
}

async fn get_mask(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let entry = app.store.get(&id)?;
    let rec = entry.read().await;
    let mask = rec
        .grabcut
        .as_ref()
        .and_then(|s| s.mask())
        .ok_or_else(|| ApiError::conflict("no mask yet: run at least one iteration"))?;
    Ok((
        [(header::CONTENT_TYPE, "image/x-portable-graymap")],
        mask.to_pgm(),
    )
        .into_response())
}

pub fn router(config: &ServiceConfig) -> Router {
    router_with_store(config, Arc::new(SessionStore::new(config.ttl)))
}

/// Router over a caller-supplied store, so tests can inspect it.
pub fn router_with_store(config: &ServiceConfig, store: Arc<SessionStore>) -> Router {
    let state = AppState {
        store,
        grabcut: config.grabcut.clone(),
    };
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/bbox", post(set_bbox))
        .route("/sessions/{id}/strokes", post(add_strokes))
        .route("/sessions/{id}/iterate", post(iterate))
        .route("/sessions/{id}/mask", get(get_mask))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match &config.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    serve_listener(tokio::net::TcpListener::bind(addr).await?, config).await
}

pub async fn serve_listener(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
) -> std::io::Result<()> {
    axum::serve(listener, router(&config)).await
}

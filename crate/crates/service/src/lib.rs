//! HTTP facade over a session store for the annotation UI and scripted
//! clients.
//!
//! All endpoints live under `/api/v1`. Errors are JSON bodies of the form
//! `{"error": {"kind": "...", "message": "..."}}`; `kind` is one of
//! `not_found`, `stale_edit`, `validation`, `precondition_failed`,
//! `calibration`, `conflict` and `internal`.
//!
//! | method | path                                       | body / query              |
//! |--------|--------------------------------------------|---------------------------|
//! | GET    | `/api/v1/sessions`                         |                           |
//! | GET    | `/api/v1/sessions/{id}`                    |                           |
//! | GET    | `/api/v1/sessions/{id}/keystones`          |                           |
//! | PUT    | `/api/v1/sessions/{id}/keystones`          | calibration document      |
//! | POST   | `/api/v1/sessions/{id}/prelabel`           |                           |
//! | GET    | `/api/v1/sessions/{id}/notes`              | `?status=needs_review`    |
//! | PATCH  | `/api/v1/sessions/{id}/notes/{note_index}` | `{label, expected_version}` |
//! | GET    | `/api/v1/sessions/{id}/frames/{frame}/skeleton` |                      |
//! | GET    | `/api/v1/sessions/{id}/export`             | `?format=full\|labels`    |
//!
//! When a media root is configured, files below it are served under
//! `/media/` with HTTP range support.

mod error;
mod handlers;
mod views;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::routing::{get, patch, post};
use axum::Router;
use pianofinger_core::Store;
use tower_http::services::ServeDir;

pub use error::{ApiError, ServiceError};
pub use views::{FrameSkeleton, LabelPatch, LayoutSummary, NoteView, SessionSummary};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store_root: PathBuf,
    pub bind: SocketAddr,
    pub media_root: Option<PathBuf>,
}

pub struct AppState {
    pub store: Store,
    skeletons: Mutex<HashMap<String, handlers::CachedTrack>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self {
            store,
            skeletons: Mutex::new(HashMap::new()),
        }
    }
}

pub fn router(state: Arc<AppState>, media_root: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", get(handlers::list_sessions))
        .route("/sessions/{id}", get(handlers::get_session))
        .route(
            "/sessions/{id}/keystones",
            get(handlers::get_keystones).put(handlers::put_keystones),
        )
        .route("/sessions/{id}/prelabel", post(handlers::trigger_prelabel))
        .route("/sessions/{id}/notes", get(handlers::get_notes))
        .route("/sessions/{id}/notes/{note_index}", patch(handlers::patch_label))
        .route(
            "/sessions/{id}/frames/{frame}/skeleton",
            get(handlers::get_frame_skeleton),
        )
        .route("/sessions/{id}/export", get(handlers::export_annotations))
        .with_state(state);
    let mut app = Router::new().nest(API_PREFIX, api);
    if let Some(root) = media_root {
        app = app.nest_service("/media", ServeDir::new(root));
    }
    app.layer(tower_http::trace::TraceLayer::new_for_http())
}

/// Open the store, bind, and serve until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let store = Store::open(&config.store_root).map_err(ServiceError::Store)?;
    if let Some(media) = &config.media_root {
        if !media.is_dir() {
            return Err(ServiceError::MediaRoot(media.clone()));
        }
    }
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: config.bind,
            source,
        })?;
    tracing::info!("annotation service listening on {}", config.bind);
    let app = router(Arc::new(AppState::new(store)), config.media_root);
    axum::serve(listener, app).await.map_err(ServiceError::Serve)
}

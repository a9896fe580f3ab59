use std::collections::HashMap;
use std::sync::Arc;
use std::time::SystemTime;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::Json;
use pianofinger_core::export::{export_annotations as render_export, ExportFormat};
use pianofinger_core::fingering::{AnnotationStats, Finger, Status};
use pianofinger_core::geometry::Calibration;
use pianofinger_core::pipeline;
use pianofinger_core::session::{SessionManifest, StoreError};
use pianofinger_core::skeleton::SkeletonTrack;

use crate::error::ApiError;
use crate::views::{FrameSkeleton, LabelPatch, LayoutSummary, NoteView, SessionSummary};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

/// Run blocking store work off the async executor.
async fn blocking<T, F>(state: &Arc<AppState>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> ApiResult<T> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub async fn list_sessions(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<SessionSummary>>> {
    blocking(&state, |s| {
        let sessions = s.store.list_sessions()?;
        Ok(Json(sessions.iter().map(SessionSummary::from).collect()))
    })
    .await
}

pub async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionManifest>> {
    blocking(&state, move |s| Ok(Json(s.store.session(&id)?.manifest()?))).await
}

pub async fn get_keystones(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<LayoutSummary>> {
    blocking(&state, move |s| {
        let dir = s.store.session(&id)?;
        let layout = pipeline::load_layout(&dir)?;
        Ok(Json(LayoutSummary::from(&layout)))
    })
    .await
}

pub async fn put_keystones(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<Calibration>, JsonRejection>,
) -> ApiResult<Json<LayoutSummary>> {
    let Json(calibration) = body.map_err(|e| ApiError::validation(e.body_text()))?;
    blocking(&state, move |s| {
        let layout = s.store.put_calibration(&id, &calibration)?;
        Ok(Json(LayoutSummary::from(&layout)))
    })
    .await
}

pub async fn trigger_prelabel(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<AnnotationStats>> {
    blocking(&state, move |s| Ok(Json(s.store.prelabel(&id)?))).await
}

#[derive(Debug, serde::Deserialize)]
pub struct NotesQuery {
    status: Option<String>,
}

pub async fn get_notes(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<NotesQuery>,
) -> ApiResult<Json<Vec<NoteView>>> {
    let filter: Option<Status> = q
        .status
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(ApiError::validation)?;
    blocking(&state, move |s| {
        let doc = s.store.session(&id)?.annotations()?;
        Ok(Json(
            doc.notes
                .iter()
                .filter(|r| filter.map_or(true, |f| r.annotation.status == f))
                .map(|r| NoteView::new(r, doc.video_offset_s))
                .collect(),
        ))
    })
    .await
}

pub async fn patch_label(
    State(state): State<Arc<AppState>>,
    Path((id, note_index)): Path<(String, usize)>,
    body: Result<Json<LabelPatch>, JsonRejection>,
) -> ApiResult<Json<NoteView>> {
    let Json(patch) = body.map_err(|e| ApiError::validation(e.body_text()))?;
    let label: Finger = patch
        .label
        .parse()
        .map_err(|e: pianofinger_core::fingering::FingerParseError| ApiError::validation(e.to_string()))?;
    blocking(&state, move |s| {
        let record = s
            .store
            .update_label(&id, note_index, label, patch.expected_version)?;
        let offset = s.store.session(&id)?.annotations()?.video_offset_s;
        Ok(Json(NoteView::new(&record, offset)))
    })
    .await
}

/// Parsed skeleton track keyed by the file's identity at load time.
pub struct CachedTrack {
    key: (std::path::PathBuf, Option<SystemTime>, u64, bool),
    track: Arc<SkeletonTrack>,
}

fn skeleton_for(state: &AppState, id: &str) -> ApiResult<Arc<SkeletonTrack>> {
    let dir = state.store.session(id)?;
    let manifest = dir.manifest()?;
    let reference = manifest
        .files
        .skeleton
        .as_deref()
        .ok_or(StoreError::PreconditionFailed("skeleton"))?;
    let path = dir.resolve(reference);
    let meta = std::fs::metadata(&path).map_err(|e| StoreError::Io {
        path: path.clone(),
        source: e,
    })?;
    let layout = pipeline::load_layout(&dir).ok();
    let key = (path, meta.modified().ok(), meta.len(), layout.is_some());

    let mut cache = state.skeletons.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(hit) = cache.get(id).filter(|c| c.key == key) {
        return Ok(hit.track.clone());
    }
    let raw = pipeline::load_track(&dir, &manifest)?;
    // Report the same floating flags the pre-labeler uses.
    let track = match &layout {
        Some(l) => raw.flag_floating(l, l.default_floating_margin()),
        None => raw,
    };
    let track = Arc::new(track);
    cache.insert(
        id.to_string(),
        CachedTrack {
            key,
            track: track.clone(),
        },
    );
    Ok(track)
}

pub async fn get_frame_skeleton(
    State(state): State<Arc<AppState>>,
    Path((id, frame)): Path<(String, i64)>,
) -> ApiResult<Json<FrameSkeleton>> {
    if frame < 0 {
        return Err(ApiError::validation(format!("frame must be non-negative, got {frame}")));
    }
    let frame = frame as u64;
    blocking(&state, move |s| {
        let track = skeleton_for(s, &id)?;
        Ok(Json(FrameSkeleton::new(frame, track.frame(frame))))
    })
    .await
}

pub async fn export_annotations(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<impl IntoResponse> {
    let format: ExportFormat = q
        .get("format")
        .map(String::as_str)
        .unwrap_or("full")
        .parse()
        .map_err(|e: pianofinger_core::export::UnknownFormat| ApiError::validation(e.to_string()))?;
    let body = blocking(&state, move |s| {
        let doc = s.store.session(&id)?.annotations()?;
        Ok(render_export(&doc, format))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body))
}

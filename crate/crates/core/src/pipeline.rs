//! Session-level composition shared by the CLI and the HTTP service.

use std::fs;
use std::io::BufReader;

use crate::fingering::{prelabel_with_intervals, AnnotationStats, Thresholds};
use crate::geometry::{ImageSize, KeyboardLayout};
use crate::midi::{parse_midi, MidiPerformance};
use crate::session::{
    AnnotationDocument, AnnotationRecord, Result, SessionDir, SessionManifest, StoreError,
    SCHEMA_VERSION,
};
use crate::skeleton::{load_skeletons, SkeletonTrack};

pub fn load_midi(dir: &SessionDir, manifest: &SessionManifest) -> Result<MidiPerformance> {
    let reference = manifest
        .files
        .midi
        .as_deref()
        .ok_or(StoreError::PreconditionFailed("midi"))?;
    let path = dir.resolve(reference);
    let bytes = fs::read(&path).map_err(|e| StoreError::io(&path, e))?;
    Ok(parse_midi(&bytes)?)
}

pub fn load_layout(dir: &SessionDir) -> Result<KeyboardLayout> {
    let calibration = dir
        .calibration()?
        .ok_or(StoreError::PreconditionFailed("keystones"))?;
    Ok(calibration.build()?)
}

/// Load the skeleton track; `image_size` falls back to 0×0 when the
/// session has no calibration yet.
pub fn load_track(dir: &SessionDir, manifest: &SessionManifest) -> Result<SkeletonTrack> {
    let reference = manifest
        .files
        .skeleton
        .as_deref()
        .ok_or(StoreError::PreconditionFailed("skeleton"))?;
    let path = dir.resolve(reference);
    let file = fs::File::open(&path).map_err(|e| StoreError::io(&path, e))?;
    let image_size = dir
        .calibration()
        .ok()
        .flatten()
        .map_or(ImageSize { width: 0, height: 0 }, |c| c.image_size);
    Ok(load_skeletons(BufReader::new(file), manifest.fps, image_size)?)
}

/// Compute a fresh annotation document, keeping human-made entries of
/// `previous` (matched by note index).
pub fn build_annotations(
    manifest: &SessionManifest,
    perf: &MidiPerformance,
    layout: &KeyboardLayout,
    track: &SkeletonTrack,
    previous: Option<&AnnotationDocument>,
) -> AnnotationDocument {
    let margin = layout.default_floating_margin();
    let track = track.flag_floating(layout, margin);
    let video_offset_s = manifest.video_offset_s();
    let fresh = prelabel_with_intervals(
        perf,
        layout,
        &track,
        manifest.fps,
        video_offset_s,
        Thresholds::default(),
    );
    let notes = fresh
        .into_iter()
        .map(|p| {
            let kept = previous.and_then(|doc| {
                doc.notes
                    .iter()
                    .find(|r| r.annotation.note_index == p.annotation.note_index)
                    .filter(|r| r.annotation.status.is_human())
            });
            match kept {
                Some(r) => r.clone(),
                None => AnnotationRecord {
                    note: p.note,
                    interval: p.interval,
                    annotation: p.annotation,
                },
            }
        })
        .collect();
    AnnotationDocument {
        schema_version: SCHEMA_VERSION,
        session_id: manifest.session_id.clone(),
        fps: manifest.fps,
        video_offset_s,
        notes,
    }
}

/// Run the pre-labeler over a session and persist the merged document.
pub fn prelabel_session(dir: &SessionDir) -> Result<AnnotationStats> {
    let manifest = dir.manifest()?;
    if manifest.files.keystones.is_none() {
        return Err(StoreError::PreconditionFailed("keystones"));
    }
    if manifest.files.skeleton.is_none() {
        return Err(StoreError::PreconditionFailed("skeleton"));
    }
    if manifest.files.midi.is_none() {
        return Err(StoreError::PreconditionFailed("midi"));
    }
    let layout = load_layout(dir)?;
    let perf = load_midi(dir, &manifest)?;
    let track = load_track(dir, &manifest)?;
    let previous = dir.annotations()?;
    let doc = build_annotations(&manifest, &perf, &layout, &track, Some(&previous));
    dir.save_annotations(&doc)?;
    Ok(doc.stats())
}

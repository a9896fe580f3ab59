//! Multimodal piano-performance dataset tooling.
//!
//! Turns a recording session (MIDI, two audio captures, per-frame hand
//! skeletons and keyboard calibration) into a synchronized, fingering
//! annotated dataset entry:
//!
//! - [`midi`] parses Standard MIDI Files and maps notes to video frames.
//! - [`audio`] decodes WAV and estimates the capture offset by cross-correlation.
//! - [`geometry`] builds the 88 key regions from keystone calibration.
//! - [`skeleton`] ingests hand landmarks and excludes floating hands.
//! - [`fingering`] scores fingers per note and pre-labels candidates.
//! - [`session`] persists sessions and human label edits.
//! - [`payload`] encodes the recorder's QR control payloads.
//! - [`synth`] fabricates sessions for demos and tests.

pub mod audio;
pub mod export;
pub mod fingering;
pub mod geometry;
pub mod midi;
pub mod payload;
pub mod pipeline;
pub mod session;
pub mod skeleton;
pub mod synth;

pub use audio::{apply_offset_to_midi, cross_correlate_offset, decode_wav, AudioBuffer, AudioError, SyncResult};
pub use export::{export_annotations, ExportFormat};
pub use fingering::{
    annotation_stats, classify_candidates, prelabel_performance, score_note, AnnotationStats,
    CandidateOutcome, Finger, NoteAnnotation, OutcomeKind, ScoreVector, Status, Thresholds,
};
pub use geometry::{
    build_layout, point_region_distance, Calibration, GeometryError, ImageSize, KeyRegion,
    KeyboardLayout, Keystone, Point,
};
pub use midi::{note_frame_interval, parse_midi, write_midi, FrameInterval, MidiError, MidiPerformance, NoteEvent};
pub use payload::{decode_control_payload, encode_control_payload, ControlKind, ControlPayload, PayloadError};
pub use session::{
    AnnotationDocument, AnnotationRecord, SessionDir, SessionManifest, Store, StoreError,
};
pub use skeleton::{load_skeletons, FingertipObservation, HandFrame, Handedness, SkeletonTrack};

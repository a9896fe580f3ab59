use pianofinger_core::fingering::OutcomeKind;
use pianofinger_core::geometry::{ImageSize, KeyRegion, KeyboardLayout};
use pianofinger_core::session::{AnnotationRecord, PieceMeta, SessionManifest};
use pianofinger_core::skeleton::{HandFrame, Handedness, Landmark};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub profile_id: String,
    pub piece: PieceMeta,
    pub fps: f64,
    /// RFC 3339.
    pub created_at: String,
    pub has_keystones: bool,
    pub has_skeleton: bool,
    pub video_offset_s: f64,
}

impl From<&SessionManifest> for SessionSummary {
    fn from(m: &SessionManifest) -> Self {
        Self {
            session_id: m.session_id.clone(),
            profile_id: m.profile_id.clone(),
            piece: m.piece.clone(),
            fps: m.fps,
            created_at: m.created_at.to_rfc3339(),
            has_keystones: m.files.keystones.is_some(),
            has_skeleton: m.files.skeleton.is_some(),
            video_offset_s: m.video_offset_s(),
        }
    }
}

/// One note as the labeling view needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteView {
    pub note_index: usize,
    pub pitch: u8,
    pub onset_s: f64,
    pub offset_s: f64,
    /// Onset on the video timeline.
    pub video_time_s: f64,
    pub first_frame: u64,
    pub frame_count: u64,
    pub outcome: OutcomeKind,
    pub scores: [f64; 10],
    pub label: Option<String>,
    pub status: String,
    pub version: u64,
}

impl NoteView {
    pub fn new(record: &AnnotationRecord, video_offset_s: f64) -> Self {
        let a = &record.annotation;
        Self {
            note_index: a.note_index,
            pitch: record.note.pitch,
            onset_s: record.note.onset_s,
            offset_s: record.note.offset_s,
            video_time_s: record.note.onset_s + video_offset_s,
            first_frame: record.interval.first_frame,
            frame_count: record.interval.frame_count,
            outcome: a.outcome.kind.clone(),
            scores: a.outcome.score.0,
            label: a.label.map(|l| l.to_string()),
            status: a.status.as_str().to_string(),
            version: a.version,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPatch {
    pub label: String,
    pub expected_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub image_size: ImageSize,
    pub regions: Vec<KeyRegion>,
}

impl From<&KeyboardLayout> for LayoutSummary {
    fn from(layout: &KeyboardLayout) -> Self {
        Self {
            image_size: layout.image_size,
            regions: layout.regions().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandView {
    pub handedness: Handedness,
    pub floating: Option<bool>,
    pub landmarks: Vec<Landmark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSkeleton {
    pub frame: u64,
    pub hands: Vec<HandView>,
}

impl FrameSkeleton {
    pub fn new(frame: u64, hf: Option<&HandFrame>) -> Self {
        let hands = hf
            .map(|hf| {
                hf.hands
                    .iter()
                    .map(|h| HandView {
                        handedness: h.handedness,
                        floating: h.floating,
                        landmarks: h.landmarks.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self { frame, hands }
    }
}

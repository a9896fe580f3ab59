//! Fingering candidate selection.
//!
//! For every note, each visible fingertip earns score while the note sounds:
//! one unit per frame inside the note's key region, and a partial credit of
//! `(1 - d/w)^2` when it lies outside at distance `0 < d < w`, where `w` is
//! the width of that key. A finger becomes a candidate when its score
//! exceeds half the note's frame count; competing candidates are resolved
//! only if exactly one of them exceeds 80%.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_region_distance, GeometryError, KeyRegion, KeyboardLayout};
use crate::midi::{note_frame_interval, FrameInterval, MidiPerformance, NoteEvent};
use crate::skeleton::SkeletonTrack;

pub const FINGER_COUNT: usize = 10;

/// Finger 0–9: 0–4 left thumb→pinky, 5–9 right thumb→pinky.
/// Displayed as `L1`–`L5` / `R1`–`R5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Finger(u8);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid finger label {0:?}, expected L1-L5 or R1-R5")]
pub struct FingerParseError(pub String);

impl Finger {
    pub fn new(index: u8) -> Option<Self> {
        (usize::from(index) < FINGER_COUNT).then_some(Self(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Finger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hand = if self.0 < 5 { 'L' } else { 'R' };
        write!(f, "{hand}{}", self.0 % 5 + 1)
    }
}

impl FromStr for Finger {
    type Err = FingerParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FingerParseError(s.to_string());
        let mut chars = s.chars();
        let base = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('L') => 0,
            Some('R') => 5,
            _ => return Err(err()),
        };
        let digit = chars.as_str().parse::<u8>().map_err(|_| err())?;
        if !(1..=5).contains(&digit) {
            return Err(err());
        }
        Ok(Finger(base + digit - 1))
    }
}

impl Serialize for Finger {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Finger {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub [f64; FINGER_COUNT]);

impl ScoreVector {
    pub fn get(&self, finger: usize) -> f64 {
        self.0[finger]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Fraction of |I(n)| a finger's score must exceed to be a candidate.
    pub candidate: f64,
    /// Fraction that singles out one finger among several candidates.
    pub dominant: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            candidate: 0.5,
            dominant: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeKind {
    Single { finger: u8 },
    Multiple { fingers: Vec<u8> },
    None,
}

impl OutcomeKind {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeKind::Single { .. } => "single",
            OutcomeKind::Multiple { .. } => "multiple",
            OutcomeKind::None => "none",
        }
    }

    pub fn single(&self) -> Option<Finger> {
        match self {
            OutcomeKind::Single { finger } => Finger::new(*finger),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub kind: OutcomeKind,
    pub score: ScoreVector,
    pub interval_len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Auto,
    NeedsReview,
    Verified,
    Corrected,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Auto => "auto",
            Status::NeedsReview => "needs_review",
            Status::Verified => "verified",
            Status::Corrected => "corrected",
        }
    }

    /// Human-made statuses survive re-running the pre-labeler.
    pub fn is_human(self) -> bool {
        matches!(self, Status::Verified | Status::Corrected)
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Status::Auto),
            "needs_review" => Ok(Status::NeedsReview),
            "verified" => Ok(Status::Verified),
            "corrected" => Ok(Status::Corrected),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteAnnotation {
    pub note_index: usize,
    pub outcome: CandidateOutcome,
    pub label: Option<Finger>,
    pub status: Status,
    pub version: u64,
}

impl NoteAnnotation {
    /// Label the pre-labeler assigned, if the outcome was unambiguous.
    pub fn auto_label(&self) -> Option<Finger> {
        self.outcome.kind.single()
    }
}

/// Accumulate per-finger scores for one note over `interval`.
pub fn score_region(region: &KeyRegion, interval: &FrameInterval, track: &SkeletonTrack) -> ScoreVector {
    let w = region.width_px;
    let mut scores = [0.0; FINGER_COUNT];
    for frame in interval.frames() {
        for tip in track.fingertips_at(frame) {
            let d = point_region_distance(tip.position, region);
            let slot = &mut scores[usize::from(tip.finger_index)];
            if d == 0.0 {
                *slot += 1.0;
            } else if d < w {
                *slot += (1.0 - d / w).powi(2);
            }
        }
    }
    ScoreVector(scores)
}

/// [`score_region`] for the note's own key.
pub fn score_note(
    note: &NoteEvent,
    interval: &FrameInterval,
    layout: &KeyboardLayout,
    track: &SkeletonTrack,
) -> Result<ScoreVector, GeometryError> {
    let region = layout.key_region(note.pitch)?;
    Ok(score_region(region, interval, track))
}

pub fn classify_candidates(score: &ScoreVector, interval_len: u64, thresholds: Thresholds) -> CandidateOutcome {
    let len = interval_len as f64;
    let above = |fraction: f64| -> Vec<u8> {
        (0..FINGER_COUNT as u8)
            .filter(|&i| score.0[usize::from(i)] > fraction * len)
            .collect()
    };
    let candidates = above(thresholds.candidate);
    let kind = match candidates.len() {
        0 => OutcomeKind::None,
        1 => OutcomeKind::Single {
            finger: candidates[0],
        },
        _ => match above(thresholds.dominant).as_slice() {
            [only] => OutcomeKind::Single { finger: *only },
            _ => OutcomeKind::Multiple {
                fingers: candidates,
            },
        },
    };
    CandidateOutcome {
        kind,
        score: *score,
        interval_len,
    }
}

/// A note with its frame interval and pre-label.
#[derive(Debug, Clone, PartialEq)]
pub struct Prelabel {
    pub note: NoteEvent,
    pub interval: FrameInterval,
    pub annotation: NoteAnnotation,
}

pub fn prelabel_note(
    note: &NoteEvent,
    layout: &KeyboardLayout,
    track: &SkeletonTrack,
    fps: f64,
    video_offset_s: f64,
    thresholds: Thresholds,
) -> Prelabel {
    let interval = note_frame_interval(note, fps, video_offset_s);
    let outcome = match score_note(note, &interval, layout, track) {
        Ok(score) => classify_candidates(&score, interval.frame_count, thresholds),
        Err(_) => CandidateOutcome {
            kind: OutcomeKind::None,
            score: ScoreVector::default(),
            interval_len: interval.frame_count,
        },
    };
    let (label, status) = match outcome.kind.single() {
        Some(f) => (Some(f), Status::Auto),
        None => (None, Status::NeedsReview),
    };
    Prelabel {
        note: *note,
        interval,
        annotation: NoteAnnotation {
            note_index: note.index,
            outcome,
            label,
            status,
            version: 0,
        },
    }
}

/// Pre-label every note of a performance, in note order.
pub fn prelabel_with_intervals(
    perf: &MidiPerformance,
    layout: &KeyboardLayout,
    track: &SkeletonTrack,
    fps: f64,
    video_offset_s: f64,
    thresholds: Thresholds,
) -> Vec<Prelabel> {
    perf.notes
        .par_iter()
        .map(|note| prelabel_note(note, layout, track, fps, video_offset_s, thresholds))
        .collect()
}

pub fn prelabel_performance(
    perf: &MidiPerformance,
    layout: &KeyboardLayout,
    track: &SkeletonTrack,
    fps: f64,
    video_offset_s: f64,
) -> Vec<NoteAnnotation> {
    prelabel_with_intervals(perf, layout, track, fps, video_offset_s, Thresholds::default())
        .into_iter()
        .map(|p| p.annotation)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub total: usize,
    pub by_status: BTreeMap<String, usize>,
    pub by_outcome: BTreeMap<String, usize>,
}

impl AnnotationStats {
    pub fn status(&self, status: Status) -> usize {
        self.by_status.get(status.as_str()).copied().unwrap_or(0)
    }

    pub fn outcome(&self, kind: &str) -> usize {
        self.by_outcome.get(kind).copied().unwrap_or(0)
    }
}

pub fn annotation_stats<'a, I>(annotations: I) -> AnnotationStats
where
    I: IntoIterator<Item = &'a NoteAnnotation>,
{
    let mut stats = AnnotationStats::default();
    for s in [Status::Auto, Status::NeedsReview, Status::Verified, Status::Corrected] {
        stats.by_status.insert(s.as_str().into(), 0);
    }
    for k in ["single", "multiple", "none"] {
        stats.by_outcome.insert(k.into(), 0);
    }
    for a in annotations {
        stats.total += 1;
        *stats.by_status.get_mut(a.status.as_str()).unwrap() += 1;
        *stats.by_outcome.get_mut(a.outcome.kind.name()).unwrap() += 1;
    }
    stats
}

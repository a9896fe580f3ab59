//! Frame-wise hand skeletons produced by an external hand tracker.
//!
//! Input is line-delimited JSON, one hand per line:
//!
//! ```text
//! {"frame": 12, "hand": "right", "floating": false, "landmarks": [[x, y, z], ... 21 triplets]}
//! ```
//!
//! `floating` may be omitted; coordinates are pixels with y growing downward.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ImageSize, KeyboardLayout, Point};

pub const LANDMARKS_PER_HAND: usize = 21;
/// Landmark indices of thumb, index, middle, ring and pinky tips.
pub const FINGERTIP_LANDMARKS: [usize; 5] = [4, 8, 12, 16, 20];

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("line {line}: malformed skeleton record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {LANDMARKS_PER_HAND} landmarks, found {count}")]
    InvalidLandmarkCount { line: usize, count: usize },
    #[error("line {line}: duplicate {hand} hand for frame {frame}")]
    DuplicateHand {
        line: usize,
        frame: u64,
        hand: Handedness,
    },
    #[error("reading skeleton stream: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    /// Offset of this hand's thumb in the 0..10 finger numbering.
    pub fn finger_base(self) -> u8 {
        match self {
            Handedness::Left => 0,
            Handedness::Right => 5,
        }
    }
}

impl std::fmt::Display for Handedness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hand {
    pub handedness: Handedness,
    pub landmarks: Vec<Landmark>,
    pub floating: Option<bool>,
}

impl Hand {
    pub fn fingertips(&self) -> impl Iterator<Item = FingertipObservation> + '_ {
        let base = self.handedness.finger_base();
        FINGERTIP_LANDMARKS.iter().enumerate().map(move |(k, &lm)| {
            let l = self.landmarks[lm];
            FingertipObservation {
                finger_index: base + k as u8,
                position: Point::new(l.x, l.y),
            }
        })
    }

    pub fn is_floating(&self) -> bool {
        self.floating == Some(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandFrame {
    pub frame: u64,
    pub hands: Vec<Hand>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingertipObservation {
    /// 0–4 left thumb→pinky, 5–9 right thumb→pinky.
    pub finger_index: u8,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTrack {
    pub frames: BTreeMap<u64, HandFrame>,
    pub fps: f64,
    pub image_size: ImageSize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    frame: u64,
    hand: Handedness,
    #[serde(default)]
    floating: Option<bool>,
    landmarks: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct RecordOut {
    frame: u64,
    hand: Handedness,
    #[serde(skip_serializing_if = "Option::is_none")]
    floating: Option<bool>,
    landmarks: Vec<[f64; 3]>,
}

/// Read a skeleton stream. Blank lines are ignored.
pub fn load_skeletons<R: BufRead>(
    reader: R,
    fps: f64,
    image_size: ImageSize,
) -> Result<SkeletonTrack, SkeletonError> {
    let mut frames: BTreeMap<u64, HandFrame> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| SkeletonError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.landmarks.len() != LANDMARKS_PER_HAND {
            return Err(SkeletonError::InvalidLandmarkCount {
                line: line_no,
                count: rec.landmarks.len(),
            });
        }
        let entry = frames.entry(rec.frame).or_insert_with(|| HandFrame {
            frame: rec.frame,
            hands: Vec::new(),
        });
        if entry.hands.iter().any(|h| h.handedness == rec.hand) {
            return Err(SkeletonError::DuplicateHand {
                line: line_no,
                frame: rec.frame,
                hand: rec.hand,
            });
        }
        entry.hands.push(Hand {
            handedness: rec.hand,
            landmarks: rec
                .landmarks
                .iter()
                .map(|&[x, y, z]| Landmark { x, y, z })
                .collect(),
            floating: rec.floating,
        });
        entry.hands.sort_by_key(|h| h.handedness);
    }
    Ok(SkeletonTrack {
        frames,
        fps,
        image_size,
    })
}

/// Serialize a track back to the line-delimited record format.
pub fn write_skeletons(track: &SkeletonTrack) -> String {
    let mut out = String::new();
    for frame in track.frames.values() {
        for hand in &frame.hands {
            let rec = RecordOut {
                frame: frame.frame,
                hand: hand.handedness,
                floating: hand.floating,
                landmarks: hand.landmarks.iter().map(|l| [l.x, l.y, l.z]).collect(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

impl SkeletonTrack {
    pub fn frame(&self, frame: u64) -> Option<&HandFrame> {
        self.frames.get(&frame)
    }

    /// Fingertips of the non-floating hands at `frame`, ordered by finger.
    pub fn fingertips_at(&self, frame: u64) -> Vec<FingertipObservation> {
        let Some(hf) = self.frames.get(&frame) else {
            return Vec::new();
        };
        hf.hands
            .iter()
            .filter(|h| !h.is_floating())
            .flat_map(Hand::fingertips)
            .collect()
    }

    /// Mark hands whose five fingertips all hover more than `margin_px`
    /// above the keyboard's top edge. Hands that already carry a flag are
    /// left untouched.
    pub fn flag_floating(&self, layout: &KeyboardLayout, margin_px: f64) -> SkeletonTrack {
        let mut out = self.clone();
        for hf in out.frames.values_mut() {
            for hand in hf.hands.iter_mut().filter(|h| h.floating.is_none()) {
                let floating = hand.fingertips().all(|tip| {
                    tip.position.y < layout.top_edge_y(tip.position.x) - margin_px
                });
                hand.floating = Some(floating);
            }
        }
        out
    }
}

/// Free-function form of [`SkeletonTrack::fingertips_at`].
pub fn fingertips_at(track: &SkeletonTrack, frame: u64) -> Vec<FingertipObservation> {
    track.fingertips_at(frame)
}

/// Free-function form of [`SkeletonTrack::flag_floating`].
pub fn flag_floating(track: &SkeletonTrack, layout: &KeyboardLayout, margin_px: f64) -> SkeletonTrack {
    track.flag_floating(layout, margin_px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layout, Keystone};

    const SIZE: ImageSize = ImageSize { width: 1280, height: 720 };

    fn record(frame: u64, hand: &str, floating: Option<bool>, n: usize, tip: (f64, f64)) -> String {
        let lms: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                if FINGERTIP_LANDMARKS.contains(&i) {
                    [tip.0 + i as f64, tip.1, 0.0]
                } else {
                    [tip.0, tip.1 + 40.0, 0.0]
                }
            })
            .collect();
        let mut v = serde_json::json!({"frame": frame, "hand": hand, "landmarks": lms});
        if let Some(f) = floating {
            v["floating"] = serde_json::json!(f);
        }
        v.to_string()
    }

    fn load(text: &str) -> Result<SkeletonTrack, SkeletonError> {
        load_skeletons(text.as_bytes(), 30.0, SIZE)
    }

    fn layout() -> KeyboardLayout {
        build_layout(
            &[
                Keystone { boundary_index: 0, top: Point::new(0.0, 100.0), bottom: Point::new(0.0, 200.0) },
                Keystone { boundary_index: 52, top: Point::new(1040.0, 100.0), bottom: Point::new(1040.0, 200.0) },
            ],
            SIZE,
        )
        .unwrap()
    }

    #[test]
    fn empty_stream() {
        assert!(load("").unwrap().frames.is_empty());
    }

    #[test]
    fn single_right_hand() {
        let t = load(&record(0, "right", None, 21, (100.0, 150.0))).unwrap();
        assert_eq!(t.frames.len(), 1);
        assert_eq!(t.frames[&0].hands.len(), 1);
        let tips = t.fingertips_at(0);
        assert_eq!(tips.iter().map(|t| t.finger_index).collect::<Vec<_>>(), vec![5, 6, 7, 8, 9]);
        assert_eq!(tips[1].position, Point::new(108.0, 150.0));
    }

    #[test]
    fn duplicate_hand_rejected() {
        let text = format!(
            "{}\n{}\n",
            record(0, "right", None, 21, (0.0, 0.0)),
            record(0, "right", None, 21, (0.0, 0.0))
        );
        assert!(matches!(load(&text), Err(SkeletonError::DuplicateHand { line: 2, frame: 0, .. })));
    }

    #[test]
    fn landmark_count_checked() {
        for n in [20, 22] {
            let err = load(&record(3, "left", None, n, (0.0, 0.0))).unwrap_err();
            assert!(matches!(err, SkeletonError::InvalidLandmarkCount { line: 1, count } if count == n));
        }
    }

    #[test]
    fn malformed_line_number() {
        let text = format!("{}\n\n{{\"frame\": -1}}\n", record(0, "left", None, 21, (0.0, 0.0)));
        assert!(matches!(load(&text), Err(SkeletonError::Parse { line: 3, .. })));
    }

    #[test]
    fn floating_hand_excluded() {
        let text = format!(
            "{}\n{}\n",
            record(4, "left", Some(true), 21, (0.0, 0.0)),
            record(4, "right", Some(false), 21, (0.0, 0.0))
        );
        let t = load(&text).unwrap();
        let idx: Vec<u8> = t.fingertips_at(4).iter().map(|o| o.finger_index).collect();
        assert_eq!(idx, vec![5, 6, 7, 8, 9]);
        assert!(t.fingertips_at(5).is_empty());
    }

    #[test]
    fn flag_floating_rule() {
        let l = layout();
        let text = format!(
            "{}\n{}\n",
            record(0, "left", None, 21, (300.0, 150.0)),
            record(0, "right", None, 21, (600.0, 50.0))
        );
        let flagged = load(&text).unwrap().flag_floating(&l, 10.0);
        let hands = &flagged.frames[&0].hands;
        assert_eq!(hands[0].floating, Some(false));
        assert_eq!(hands[1].floating, Some(true));
        assert_eq!(flagged.flag_floating(&l, 10.0), flagged);
    }

    #[test]
    fn flag_floating_passthrough() {
        let l = layout();
        let t = load(&record(0, "right", Some(false), 21, (600.0, 50.0))).unwrap();
        assert_eq!(t.flag_floating(&l, 10.0), t);
    }

    #[test]
    fn write_then_load() {
        let text = format!(
            "{}\n{}\n",
            record(7, "right", Some(false), 21, (1.5, 2.5)),
            record(2, "left", None, 21, (3.0, 4.0))
        );
        let t = load(&text).unwrap();
        assert_eq!(load(&write_skeletons(&t)).unwrap(), t);
    }
}

//! Synthetic sessions for demos and tests: a straight keyboard, MIDI built
//! from note lists, and hand tracks that press chosen keys with chosen
//! fingers.

use std::collections::BTreeMap;

use crate::fingering::Finger;
use crate::geometry::{Calibration, ImageSize, KeyRegion, KeyboardLayout, Keystone, Point, LAST_BOUNDARY};
use crate::midi::{note_frame_interval, sort_and_index, MidiPerformance, NoteEvent, TempoChange};
use crate::skeleton::{Hand, HandFrame, Handedness, Landmark, SkeletonTrack, FINGERTIP_LANDMARKS, LANDMARKS_PER_HAND};

pub const DEFAULT_PPQ: u16 = 480;
pub const DEFAULT_TEMPO: u32 = 500_000;

/// Axis-aligned keyboard spanning `left..right` horizontally and
/// `top..bottom` vertically, given by its two outer keystones.
pub fn straight_calibration(image_size: ImageSize, left: f64, right: f64, top: f64, bottom: f64) -> Calibration {
    Calibration {
        image_size,
        keystones: vec![
            Keystone {
                boundary_index: 0,
                top: Point::new(left, top),
                bottom: Point::new(left, bottom),
            },
            Keystone {
                boundary_index: LAST_BOUNDARY,
                top: Point::new(right, top),
                bottom: Point::new(right, bottom),
            },
        ],
    }
}

/// The 1280×720 keyboard used by the examples: keys 1200 px wide in total,
/// 160 px tall.
pub fn demo_calibration() -> Calibration {
    straight_calibration(ImageSize { width: 1280, height: 720 }, 40.0, 1240.0, 400.0, 560.0)
}

pub fn note(pitch: u8, onset_s: f64, offset_s: f64) -> NoteEvent {
    NoteEvent {
        index: 0,
        pitch,
        velocity: 64,
        onset_s,
        offset_s,
        channel: 0,
    }
}

/// Constant-tempo performance; notes are sorted and re-indexed.
pub fn performance(mut notes: Vec<NoteEvent>) -> MidiPerformance {
    sort_and_index(&mut notes);
    let duration_s = notes.iter().map(|n| n.offset_s).fold(0.0, f64::max);
    MidiPerformance {
        notes,
        ppq: DEFAULT_PPQ,
        tempo_map: vec![TempoChange {
            tick: 0,
            us_per_quarter: DEFAULT_TEMPO,
        }],
        duration_s,
    }
}

/// A hand whose fingertips (thumb to pinky) sit at `tips`; the other
/// landmarks collapse onto a point 60 px below their mean.
pub fn hand(handedness: Handedness, tips: [Point; 5]) -> Hand {
    let cx = tips.iter().map(|p| p.x).sum::<f64>() / 5.0;
    let cy = tips.iter().map(|p| p.y).sum::<f64>() / 5.0;
    let mut landmarks = vec![Landmark { x: cx, y: cy + 60.0, z: 0.0 }; LANDMARKS_PER_HAND];
    for (tip, &lm) in tips.iter().zip(FINGERTIP_LANDMARKS.iter()) {
        landmarks[lm] = Landmark { x: tip.x, y: tip.y, z: 0.0 };
    }
    Hand {
        handedness,
        landmarks,
        floating: None,
    }
}

/// Where a finger presses `region`: low on a white key, clear of the black
/// keys; mid-key on a black key.
pub fn press_point(region: &KeyRegion) -> Point {
    let [tl, tr, br, bl] = region.quad;
    let top = Point::new((tl.x + tr.x) / 2.0, (tl.y + tr.y) / 2.0);
    let bottom = Point::new((bl.x + br.x) / 2.0, (bl.y + br.y) / 2.0);
    let t = if region.is_black { 0.5 } else { 0.85 };
    Point::new(top.x + (bottom.x - top.x) * t, top.y + (bottom.y - top.y) * t)
}

/// Resting fingertip position for `finger`: in front of the keyboard,
/// further below it than any key is wide, so it never scores.
pub fn rest_point(layout: &KeyboardLayout, finger: u8) -> Point {
    let first = layout.regions().first().expect("88 regions");
    let last = layout.regions().last().expect("88 regions");
    let max_width = layout.regions().iter().map(|r| r.width_px).fold(0.0, f64::max);
    let x0 = first.quad[3].x;
    let x1 = last.quad[2].x;
    let bottom = first.quad[3].y.max(last.quad[2].y);
    let x = x0 + (x1 - x0) * (f64::from(finger) + 0.5) / 10.0;
    Point::new(x, bottom + 2.0 * max_width + 10.0)
}

/// Track in which `fingers[i]` presses note `i` of `perf` for its whole
/// frame interval and every other fingertip rests. When two notes give the
/// same finger overlapping frames the later note wins.
pub fn planted_track(
    layout: &KeyboardLayout,
    perf: &MidiPerformance,
    fingers: &[Finger],
    fps: f64,
    video_offset_s: f64,
) -> SkeletonTrack {
    assert_eq!(perf.notes.len(), fingers.len(), "one finger per note");
    let mut tips: BTreeMap<u64, [Point; 10]> = BTreeMap::new();
    let rest: [Point; 10] = std::array::from_fn(|f| rest_point(layout, f as u8));
    let end = perf
        .notes
        .iter()
        .map(|n| note_frame_interval(n, fps, video_offset_s).frames().end)
        .max()
        .unwrap_or(0);
    for frame in 0..end {
        tips.insert(frame, rest);
    }
    for (n, finger) in perf.notes.iter().zip(fingers) {
        let Ok(region) = layout.key_region(n.pitch) else {
            continue;
        };
        let p = press_point(region);
        for frame in note_frame_interval(n, fps, video_offset_s).frames() {
            tips.get_mut(&frame).expect("frame in range")[usize::from(finger.index())] = p;
        }
    }
    track_from_tips(&tips, fps, layout.image_size)
}

/// Two hands per frame from per-frame fingertip positions (index 0–4 the
/// left thumb to pinky, 5–9 the right).
pub fn track_from_tips(tips: &BTreeMap<u64, [Point; 10]>, fps: f64, image_size: ImageSize) -> SkeletonTrack {
    let frames = tips
        .iter()
        .map(|(&frame, t)| {
            let left: [Point; 5] = std::array::from_fn(|k| t[k]);
            let right: [Point; 5] = std::array::from_fn(|k| t[k + 5]);
            (
                frame,
                HandFrame {
                    frame,
                    hands: vec![hand(Handedness::Left, left), hand(Handedness::Right, right)],
                },
            )
        })
        .collect();
    SkeletonTrack {
        frames,
        fps,
        image_size,
    }
}

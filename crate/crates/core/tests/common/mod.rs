#![allow(dead_code)]

use std::collections::BTreeMap;

use pianofinger_core::geometry::{Calibration, ImageSize, KeyboardLayout, Keystone, Point};
use pianofinger_core::skeleton::{HandFrame, Handedness, SkeletonTrack};
use pianofinger_core::synth;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Gently distorted keyboard with 2–5 keystones.
pub fn random_calibration(rng: &mut ChaCha8Rng) -> Calibration {
    loop {
        let mut idx = vec![0u8, 52];
        for _ in 0..rng.gen_range(0..4) {
            idx.push(rng.gen_range(1..52));
        }
        idx.sort_unstable();
        idx.dedup();
        let left = rng.gen_range(0.0..200.0);
        let span = rng.gen_range(900.0..1700.0);
        let top = rng.gen_range(250.0..450.0);
        let height = rng.gen_range(100.0..220.0);
        let keystones = idx
            .iter()
            .map(|&b| {
                let t = f64::from(b) / 52.0;
                let bow = (t * std::f64::consts::PI).sin() * rng.gen_range(-20.0..20.0);
                let x = left + span * t + if b == 0 || b == 52 { 0.0 } else { rng.gen_range(-5.0..5.0) };
                let lean = rng.gen_range(-6.0..6.0);
                Keystone {
                    boundary_index: b,
                    top: Point::new(x + lean, top + bow),
                    bottom: Point::new(x - lean, top + bow + height),
                }
            })
            .collect();
        let cal = Calibration {
            image_size: ImageSize { width: 1920, height: 1080 },
            keystones,
        };
        if cal.build().is_ok() {
            return cal;
        }
    }
}

pub fn random_layout(rng: &mut ChaCha8Rng) -> KeyboardLayout {
    random_calibration(rng).build().unwrap()
}

/// Frames `0..frames` with fingertips scattered around key `pitch`, random
/// hand presence and random floating flags.
pub fn random_track(rng: &mut ChaCha8Rng, layout: &KeyboardLayout, pitch: u8, frames: u64) -> SkeletonTrack {
    let region = *layout.key_region(pitch).unwrap();
    let c = region.centroid();
    let mut out = BTreeMap::new();
    for f in 0..frames {
        let mut hands = Vec::new();
        for handedness in [Handedness::Left, Handedness::Right] {
            if rng.gen_bool(0.1) {
                continue;
            }
            let tips: [Point; 5] = std::array::from_fn(|_| {
                let r = rng.gen_range(0.0..region.width_px * 2.5);
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            });
            let mut hand = synth::hand(handedness, tips);
            hand.floating = match rng.gen_range(0..4) {
                0 => Some(true),
                1 => Some(false),
                _ => None,
            };
            hands.push(hand);
        }
        out.insert(f, HandFrame { frame: f, hands });
    }
    SkeletonTrack {
        frames: out,
        fps: 30.0,
        image_size: layout.image_size,
    }
}

/// Apply `map` to every keystone and landmark coordinate.
pub fn map_points(
    cal: &Calibration,
    track: &SkeletonTrack,
    map: impl Fn(Point) -> Point,
) -> (Calibration, SkeletonTrack) {
    let mut cal = cal.clone();
    for k in &mut cal.keystones {
        k.top = map(k.top);
        k.bottom = map(k.bottom);
    }
    let mut track = track.clone();
    for hf in track.frames.values_mut() {
        for h in &mut hf.hands {
            for l in &mut h.landmarks {
                let p = map(Point::new(l.x, l.y));
                l.x = p.x;
                l.y = p.y;
            }
        }
    }
    (cal, track)
}

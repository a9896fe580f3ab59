mod common;

use pianofinger_core::fingering::{classify_candidates, score_region, OutcomeKind, ScoreVector, Thresholds};
use pianofinger_core::geometry::Point;
use pianofinger_core::midi::FrameInterval;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAMES: u64 = 24;

fn interval() -> FrameInterval {
    FrameInterval { first_frame: 0, frame_count: FRAMES, fps: 30.0 }
}

fn close(a: &ScoreVector, b: &ScoreVector) -> bool {
    a.0.iter().zip(&b.0).all(|(x, y)| (x - y).abs() <= 1e-9 * FRAMES as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pulling_tips_toward_the_key_never_lowers_scores(seed in any::<u64>(), t in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = common::random_layout(&mut rng);
        let pitch = rng.gen_range(21..=108);
        let track = common::random_track(&mut rng, &layout, pitch, FRAMES);
        let region = layout.key_region(pitch).unwrap();
        let c = region.centroid();
        let (_, pulled) = common::map_points(&common::random_calibration(&mut rng), &track, |p| {
            Point::new(p.x + (c.x - p.x) * t, p.y + (c.y - p.y) * t)
        });
        let before = score_region(region, &interval(), &track);
        let after = score_region(region, &interval(), &pulled);
        for f in 0..10 {
            prop_assert!(after.0[f] >= before.0[f] - 1e-9, "finger {}: {} -> {}", f, before.0[f], after.0[f]);
        }
    }

    #[test]
    fn scores_ignore_translation(seed in any::<u64>(), dx in -300.0..300.0f64, dy in -200.0..200.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cal = common::random_calibration(&mut rng);
        let layout = cal.build().unwrap();
        let pitch = rng.gen_range(21..=108);
        let track = common::random_track(&mut rng, &layout, pitch, FRAMES);
        let (cal2, track2) = common::map_points(&cal, &track, |p| Point::new(p.x + dx, p.y + dy));
        let layout2 = cal2.build().unwrap();
        let a = score_region(layout.key_region(pitch).unwrap(), &interval(), &track);
        let b = score_region(layout2.key_region(pitch).unwrap(), &interval(), &track2);
        prop_assert!(close(&a, &b), "{:?} vs {:?}", a, b);
    }

    #[test]
    fn scores_ignore_uniform_scale(seed in any::<u64>(), s in 0.25..4.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cal = common::random_calibration(&mut rng);
        let layout = cal.build().unwrap();
        let pitch = rng.gen_range(21..=108);
        let track = common::random_track(&mut rng, &layout, pitch, FRAMES);
        let (cal2, track2) = common::map_points(&cal, &track, |p| Point::new(p.x * s, p.y * s));
        let layout2 = cal2.build().unwrap();
        let a = score_region(layout.key_region(pitch).unwrap(), &interval(), &track);
        let b = score_region(layout2.key_region(pitch).unwrap(), &interval(), &track2);
        prop_assert!(close(&a, &b), "{:?} vs {:?}", a, b);
    }

    #[test]
    fn floating_hands_contribute_nothing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = common::random_layout(&mut rng);
        let pitch = rng.gen_range(21..=108);
        let track = common::random_track(&mut rng, &layout, pitch, FRAMES);
        let mut pruned = track.clone();
        for hf in pruned.frames.values_mut() {
            hf.hands.retain(|h| !h.is_floating());
        }
        let region = layout.key_region(pitch).unwrap();
        prop_assert_eq!(score_region(region, &interval(), &track), score_region(region, &interval(), &pruned));
    }

    #[test]
    fn candidate_threshold_is_strict(len in 1u64..500, finger in 0usize..10) {
        let half = 0.5 * len as f64;
        let mut s = ScoreVector::default();
        s.0[finger] = half;
        prop_assert_eq!(classify_candidates(&s, len, Thresholds::default()).kind, OutcomeKind::None);
        s.0[finger] = half.next_up();
        prop_assert_eq!(classify_candidates(&s, len, Thresholds::default()).kind, OutcomeKind::Single { finger: finger as u8 });
    }

    #[test]
    fn classification_matches_set_definition(raw in prop::array::uniform10(0.0..1.0f64), len in 1u64..60) {
        let n = len as f64;
        let s = ScoreVector(raw.map(|x| x * n));
        let a: Vec<u8> = (0..10u8).filter(|&i| s.0[usize::from(i)] > 0.5 * n).collect();
        let b: Vec<u8> = (0..10u8).filter(|&i| s.0[usize::from(i)] > 0.8 * n).collect();
        let expected = match (a.len(), b.len()) {
            (0, _) => OutcomeKind::None,
            (1, _) => OutcomeKind::Single { finger: a[0] },
            (_, 1) => OutcomeKind::Single { finger: b[0] },
            _ => OutcomeKind::Multiple { fingers: a },
        };
        prop_assert_eq!(classify_candidates(&s, len, Thresholds::default()).kind, expected);
    }
}

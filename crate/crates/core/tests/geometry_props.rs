mod common;

use pianofinger_core::geometry::{point_region_distance, Keystone, Point};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn keystone_on_interpolated_line_changes_nothing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cal = common::random_calibration(&mut rng);
        let layout = cal.build().unwrap();
        let free: Vec<u8> = (1..52u8).filter(|b| cal.keystones.iter().all(|k| k.boundary_index != *b)).collect();
        let b = free[rng.gen_range(0..free.len())];
        let (top, bottom) = layout.boundaries()[usize::from(b)];
        let mut more = cal.clone();
        more.keystones.push(Keystone { boundary_index: b, top, bottom });
        more.keystones.sort_by_key(|k| k.boundary_index);
        let again = more.build().unwrap();
        for (r, s) in layout.regions().iter().zip(again.regions()) {
            for (p, q) in r.quad.iter().zip(&s.quad) {
                prop_assert!(p.distance(*q) <= 1e-9, "pitch {} moved by {}", r.pitch, p.distance(*q));
            }
            prop_assert!((r.width_px - s.width_px).abs() <= 1e-9);
        }
    }

    #[test]
    fn key_region_is_indexed_by_pitch(seed in any::<u64>()) {
        let layout = common::random_layout(&mut ChaCha8Rng::seed_from_u64(seed));
        for pitch in 21..=108u8 {
            prop_assert_eq!(layout.key_region(pitch).unwrap().pitch, pitch);
        }
        prop_assert!(layout.key_region(20).is_err());
        prop_assert!(layout.key_region(109).is_err());
    }

    #[test]
    fn boundary_points_always_have_an_owner(seed in any::<u64>(), s in 0.7..0.999f64) {
        let layout = common::random_layout(&mut ChaCha8Rng::seed_from_u64(seed));
        let whites: Vec<u8> = layout.regions().iter().filter(|r| !r.is_black).map(|r| r.pitch).collect();
        for b in 1..52usize {
            let (t, bot) = layout.boundaries()[b];
            let p = Point::new(t.x + (bot.x - t.x) * s, t.y + (bot.y - t.y) * s);
            let got = layout.locate_key_at(p);
            let allowed = [b.checked_sub(1).map(|i| whites[i]), whites.get(b).copied()];
            prop_assert!(got.is_some() && allowed.contains(&got), "boundary {}: {:?}", b, got);
        }
    }

    #[test]
    fn distance_is_lipschitz_and_zero_on_containment(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = common::random_layout(&mut rng);
        for _ in 0..200 {
            let r = &layout.regions()[rng.gen_range(0..88)];
            let c = r.centroid();
            let p = Point::new(c.x + rng.gen_range(-60.0..60.0), c.y + rng.gen_range(-150.0..150.0));
            let q = Point::new(p.x + rng.gen_range(-20.0..20.0), p.y + rng.gen_range(-20.0..20.0));
            let (dp, dq) = (point_region_distance(p, r), point_region_distance(q, r));
            prop_assert!((dp - dq).abs() <= p.distance(q) + 1e-9);
            prop_assert_eq!(dp == 0.0, r.contains(p));
        }
    }
}

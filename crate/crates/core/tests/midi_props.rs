use pianofinger_core::midi::{note_frame_interval, parse_midi, write_midi, MidiPerformance, TempoChange, WriteOptions};
use pianofinger_core::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Notes on integer ticks under a random multi-tempo map.
fn random_performance(seed: u64) -> MidiPerformance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ppq = [96u16, 120, 384, 480, 960][rng.gen_range(0..5)];
    let mut tempo_map = vec![TempoChange {
        tick: 0,
        us_per_quarter: rng.gen_range(200_000..1_500_000),
    }];
    for _ in 0..rng.gen_range(0..4) {
        let tick = tempo_map.last().unwrap().tick + rng.gen_range(1..5_000);
        tempo_map.push(TempoChange {
            tick,
            us_per_quarter: rng.gen_range(200_000..1_500_000),
        });
    }
    let timing = MidiPerformance {
        notes: Vec::new(),
        ppq,
        tempo_map: tempo_map.clone(),
        duration_s: 0.0,
    };
    let mut ticks: Vec<(u8, u8, u64, u64)> = Vec::new();
    for _ in 0..rng.gen_range(0..60) {
        let (pitch, channel) = (rng.gen_range(0..128), rng.gen_range(0..16));
        let on = rng.gen_range(0..20_000u64);
        let off = on + rng.gen_range(1..3_000);
        let clash = ticks
            .iter()
            .any(|&(p, c, a, b)| p == pitch && c == channel && on <= b && a <= off);
        if !clash {
            ticks.push((pitch, channel, on, off));
        }
    }
    let notes = ticks
        .iter()
        .map(|&(pitch, channel, on, off)| {
            let mut n = synth::note(pitch, timing.tick_to_seconds(on), timing.tick_to_seconds(off));
            n.channel = channel;
            n.velocity = rng.gen_range(1..128);
            n
        })
        .collect();
    let mut perf = synth::performance(notes);
    perf.ppq = ppq;
    perf.tempo_map = tempo_map;
    perf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn round_trip_preserves_notes(seed in any::<u64>()) {
        let perf = random_performance(seed);
        let parsed = parse_midi(&write_midi(&perf, WriteOptions::default())).unwrap();
        prop_assert_eq!(parsed.notes.len(), perf.notes.len());
        prop_assert_eq!(&parsed.tempo_map, &perf.tempo_map);
        for (a, b) in parsed.notes.iter().zip(&perf.notes) {
            prop_assert_eq!((a.index, a.pitch, a.velocity, a.channel), (b.index, b.pitch, b.velocity, b.channel));
            prop_assert!((a.onset_s - b.onset_s).abs() <= 1e-9);
            prop_assert!((a.offset_s - b.offset_s).abs() <= 1e-9);
        }
    }

    #[test]
    fn running_status_parses_identically(seed in any::<u64>()) {
        let perf = random_performance(seed);
        let plain = parse_midi(&write_midi(&perf, WriteOptions { running_status: false })).unwrap();
        let running = parse_midi(&write_midi(&perf, WriteOptions { running_status: true })).unwrap();
        prop_assert_eq!(plain, running);
    }

    #[test]
    fn frame_interval_is_exact(
        onset in 0.0..30.0f64,
        duration in 0.0..3.0f64,
        fps in prop::sample::select(vec![23.976, 24.0, 25.0, 29.97, 30.0, 50.0, 59.94, 60.0, 120.0]),
        shift in -2.0..2.0f64,
    ) {
        let note = synth::note(60, onset, onset + duration);
        let iv = note_frame_interval(&note, fps, shift);
        let inside = |f: u64| {
            let t = f as f64 / fps;
            onset + shift <= t && t < onset + duration + shift
        };
        for f in iv.frames() {
            prop_assert!(inside(f), "frame {} outside", f);
        }
        if iv.frame_count > 0 {
            prop_assert!(iv.first_frame == 0 || !inside(iv.first_frame - 1));
            prop_assert!(!inside(iv.first_frame + iv.frame_count));
        } else {
            let hi = ((onset + duration + shift) * fps).max(0.0) as u64 + 2;
            prop_assert!((0..=hi).all(|f| !inside(f)));
        }
    }
}

use pianofinger_core::audio::{apply_offset_to_midi, cross_correlate_offset, AudioBuffer};
use pianofinger_core::synth;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(seed: u64, n: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn buffer(samples: Vec<f32>) -> AudioBuffer {
    AudioBuffer::new(samples, 16_000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn delayed_copy_recovers_lag(seed in any::<u64>(), len in 16usize..3_000, k in 0usize..3_000) {
        let x = noise(seed, len);
        let mut y = vec![0.0; k];
        y.extend_from_slice(&x);
        let r = cross_correlate_offset(&buffer(x), &buffer(y)).unwrap();
        prop_assert_eq!(r.lag_samples, k as i64);
        prop_assert!((r.peak_correlation - 1.0).abs() < 1e-6);
    }

    #[test]
    fn swapping_inputs_negates_lag(seed in any::<u64>(), len in 64usize..3_000, k in -1_000i64..1_000) {
        let x = noise(seed, len);
        let jitter = noise(seed ^ 0xABCD, len + 1_000);
        let y: Vec<f32> = (0..len as i64)
            .map(|i| {
                let j = i - k;
                let base = if (0..len as i64).contains(&j) { x[j as usize] } else { 0.0 };
                base + 0.2 * jitter[i as usize]
            })
            .collect();
        let (a, b) = (buffer(x), buffer(y));
        let ab = cross_correlate_offset(&a, &b).unwrap();
        let ba = cross_correlate_offset(&b, &a).unwrap();
        prop_assert_eq!(ab.lag_samples, -ba.lag_samples);
    }

    #[test]
    fn offset_keeps_unclipped_durations(seed in any::<u64>(), offset in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let notes = (0..rng.gen_range(0..40))
            .map(|_| {
                let on = rng.gen_range(0.0..10.0);
                synth::note(rng.gen_range(21..=108), on, on + rng.gen_range(0.01..2.0))
            })
            .collect();
        let perf = synth::performance(notes);
        let shifted = apply_offset_to_midi(&perf, offset);
        let unclipped: Vec<_> = perf.notes.iter().filter(|n| n.onset_s + offset >= 0.0).collect();
        for n in unclipped {
            let m = shifted
                .notes
                .iter()
                .find(|m| m.pitch == n.pitch && (m.onset_s - (n.onset_s + offset)).abs() < 1e-12)
                .expect("unclipped note survives");
            prop_assert!((m.duration_s() - n.duration_s()).abs() < 1e-9);
        }
        prop_assert!(shifted.notes.iter().all(|n| n.onset_s >= 0.0 && n.offset_s > 0.0));
    }
}

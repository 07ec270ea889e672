use ndarray::Array2;
use proptest::prelude::*;
use upit::corpus::{dequantize, quantize};
use upit::dsp::{apply_mask, inverse_stft, stft, MagnitudeSpectrogram, StftConfig, Waveform};
use upit::levels::active_speech_level;
use upit::masks::{frame_pit_losses, upit_loss, upit_permutation, Mask, SourceTarget};
use upit::metrics::{estoi, sdr};

fn signal(min: usize, max: usize) -> impl Strategy<Value = Waveform> {
    prop::collection::vec(-1.0f64..1.0, min..max).prop_map(|s| Waveform::new(s, 8000))
}

fn grid(k: usize, f: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, k * f).prop_map(move |v| Array2::from_shape_vec((k, f), v).unwrap())
}

fn magnitude(frames: Array2<f64>) -> MagnitudeSpectrogram {
    MagnitudeSpectrogram {
        frames,
        config: StftConfig::default(),
        original_length: 0,
        sample_rate: 8000,
    }
}

/// Burst of modulated tone with silence around it, so P.56 has pauses to skip.
fn talkspurt(seed: u64) -> Waveform {
    let n = 8000;
    let f = 150.0 + (seed % 200) as f64;
    Waveform::new(
        (0..n)
            .map(|i| {
                let t = i as f64 / 8000.0;
                if (2000..6000).contains(&i) {
                    (2.0 * std::f64::consts::PI * f * t).sin() * (0.6 + 0.4 * (9.0 * t).sin())
                } else {
                    0.0
                }
            })
            .collect(),
        8000,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip(w in signal(256, 3000)) {
        let cfg = StftConfig::default();
        let spec = stft(&w, &cfg).unwrap();
        let y = inverse_stft(&spec.magnitude(), &spec.phase()).unwrap();
        prop_assert_eq!(y.len(), w.len());
        for (a, b) in y.samples.iter().zip(&w.samples) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_magnitudes_stay_nonnegative(m in grid(4, 129, -2.0, 3.0), r in grid(4, 129, 0.0, 5.0)) {
        let out = apply_mask(&Mask::new(m.clone(), 0), &magnitude(r.clone())).unwrap();
        for ((o, mv), rv) in out.frames.iter().zip(&m).zip(&r) {
            prop_assert!(*o >= 0.0);
            prop_assert!(*o <= mv.max(0.0) * rv + 1e-12);
        }
    }

    #[test]
    fn frame_level_search_never_loses_to_one_permutation(
        masks in prop::collection::vec(grid(5, 6, 0.0, 2.0), 3),
        r in grid(5, 6, 0.0, 3.0),
        targets in prop::collection::vec(grid(5, 6, -1.0, 3.0), 3),
    ) {
        let masks: Vec<Mask> = masks.into_iter().enumerate().map(|(j, m)| Mask::new(m, j)).collect();
        let targets: Vec<SourceTarget> = targets.into_iter().map(SourceTarget::from_projected).collect();
        let r = magnitude(r);
        let perm = upit_permutation(&masks, &r, &targets).unwrap();
        let total = upit_loss(&masks, &r, &targets, &perm).unwrap().total;
        let frame: f64 = frame_pit_losses(&masks, &r, &targets).unwrap().iter().map(|(l, _)| l).sum();
        prop_assert!(frame <= total * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn sdr_ignores_estimate_gain(w in signal(1200, 2000), g in 0.01f64..50.0, noise_seed in any::<u64>()) {
        let n = upit::levels::white_noise(w.len(), 0.05, 8000, noise_seed);
        let est = Waveform::new(w.samples.iter().zip(&n.samples).map(|(a, b)| a + b).collect(), 8000);
        let a = sdr(&w, &est).unwrap();
        let b = sdr(&w, &est.scaled(g)).unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn speech_level_follows_gain(seed in 0u64..1000, gain_db in -30.0f64..6.0) {
        let w = talkspurt(seed);
        let g = 10f64.powf(gain_db / 20.0);
        let a = active_speech_level(&w).unwrap();
        let b = active_speech_level(&w.scaled(g)).unwrap();
        prop_assert!((b - a - gain_db).abs() < 1e-6, "{} {} {}", a, b, gain_db);
    }

    #[test]
    fn quantisation_error_is_half_an_lsb(x in -1.0f64..1.0) {
        prop_assert!((dequantize(quantize(x)) - x).abs() <= 0.5 / 32768.0 + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn estoi_ignores_processed_gain(seed in any::<u64>(), g in 0.05f64..20.0) {
        let clean = upit::levels::white_noise(12000, 0.1, 8000, seed);
        let clean = Waveform::new(
            clean.samples.iter().enumerate().map(|(i, v)| v * (1.1 + (i as f64 / 700.0).sin())).collect(),
            8000,
        );
        let n = upit::levels::white_noise(12000, 0.02, 8000, seed ^ 1);
        let noisy = Waveform::new(clean.samples.iter().zip(&n.samples).map(|(a, b)| a + b).collect(), 8000);
        let a = estoi(&clean, &noisy).unwrap();
        let b = estoi(&clean, &noisy.scaled(g)).unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }
}

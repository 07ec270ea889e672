//! Formant-synthesised speech-like corpus used when no licensed corpus is at hand.
//!
//! Each speaker has a fixed pitch range and vocal-tract scaling; utterances are
//! strings of voiced syllables, fricatives and pauses. The result is not
//! intelligible but has speech-like spectra, harmonicity and on/off structure.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::CorpusCatalog;
use super::wav::write_wav;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::noise::Split;

/// (F1, F2, F3) in Hz for a reference adult male tract.
const VOWELS: [[f64; 3]; 7] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
    [440.0, 1020.0, 2240.0],
];
const BANDWIDTHS: [f64; 3] = [80.0, 110.0, 160.0];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub sample_rate: u32,
    /// Speakers shared by the train and validation splits.
    pub train_speakers: usize,
    pub train_utterances: usize,
    pub validation_utterances: usize,
    /// Speakers seen only in the test split.
    pub test_speakers: usize,
    pub test_utterances: usize,
    pub min_duration_secs: f64,
    pub max_duration_secs: f64,
    /// Prefix of every speaker id; distinct prefixes keep corpora disjoint.
    pub speaker_prefix: String,
    pub seed: u64,
}

impl SyntheticCorpusSpec {
    pub fn desk(seed: u64) -> Self {
        Self {
            sample_rate: 8000,
            train_speakers: 12,
            train_utterances: 12,
            validation_utterances: 3,
            test_speakers: 6,
            test_utterances: 8,
            min_duration_secs: 1.5,
            max_duration_secs: 3.0,
            speaker_prefix: "spk".into(),
            seed,
        }
    }

    /// Corpus from which babble and speech-shaped noise are built; its
    /// speakers never occur in a speech corpus with the default prefix.
    pub fn desk_noise_source(seed: u64) -> Self {
        Self {
            train_speakers: 24,
            train_utterances: 10,
            validation_utterances: 0,
            test_speakers: 0,
            test_utterances: 0,
            speaker_prefix: "nsrc".into(),
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate < 4000 {
            return Err(Error::InvalidArgument("sample rate below 4 kHz".into()));
        }
        if !(self.min_duration_secs > 0.0 && self.min_duration_secs <= self.max_duration_secs) {
            return Err(Error::InvalidArgument("invalid duration range".into()));
        }
        if self.train_speakers * self.train_utterances + self.test_speakers * self.test_utterances == 0 {
            return Err(Error::InvalidArgument("corpus would be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Voice {
    f0: f64,
    tract_scale: f64,
    tilt: f64,
    breathiness: f64,
}

impl Voice {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let female = rng.random_bool(0.5);
        let (f0, scale) = if female {
            (rng.random_range(175.0..250.0), rng.random_range(1.1..1.22))
        } else {
            (rng.random_range(90.0..145.0), rng.random_range(0.92..1.04))
        };
        Self {
            f0,
            tract_scale: scale,
            tilt: rng.random_range(0.93..0.98),
            breathiness: rng.random_range(0.01..0.05),
        }
    }
}

/// Two-pole resonator with unity gain at DC.
#[derive(Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let c = 2.0 * r * (2.0 * PI * freq / fs).cos();
        let b0 = 1.0 - c + r * r;
        let y = b0 * x + c * self.y1 - r * r * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn raised_cosine_envelope(len: usize, ramp: usize) -> impl Fn(usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    move |n| {
        let k = n.min(len - 1 - n);
        if k >= ramp {
            1.0
        } else {
            0.5 - 0.5 * (PI * k as f64 / ramp as f64).cos()
        }
    }
}

fn synthesize_utterance(voice: Voice, duration: f64, fs: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fsf = fs as f64;
    let target = (duration * fsf) as usize;
    let nyq_guard = 0.45 * fsf;
    let mut out = Vec::with_capacity(target + fs as usize);
    let ms = |x: f64| (x * fsf / 1000.0) as usize;

    out.extend(std::iter::repeat_n(0.0, ms(rng.random_range(60.0..150.0))));
    let mut res = [Resonator::default(), Resonator::default(), Resonator::default()];
    let mut formants = VOWELS[rng.random_range(0..VOWELS.len())].map(|f| f * voice.tract_scale);
    let mut phase = 0.0f64;
    let mut glottal = 0.0f64;
    let mut hp_prev = 0.0f64;
    let mut word_left = rng.random_range(1..4usize);

    while out.len() < target {
        if rng.random_bool(0.25) {
            // fricative: high-passed noise burst
            let len = ms(rng.random_range(50.0..110.0));
            let env = raised_cosine_envelope(len, ms(15.0));
            let gain = rng.random_range(0.05..0.15);
            let centre = rng.random_range(0.3..0.42) * fsf;
            let mut r = Resonator::default();
            for n in 0..len {
                let w: f64 = rng.random_range(-1.0..1.0);
                let hp = w - hp_prev;
                hp_prev = w;
                out.push(gain * env(n) * (hp + 0.5 * r.step(hp, centre, 900.0, fsf)));
            }
        }

        let next = VOWELS[rng.random_range(0..VOWELS.len())].map(|f| (f * voice.tract_scale).min(nyq_guard));
        let len = ms(rng.random_range(110.0..260.0));
        let env = raised_cosine_envelope(len, ms(25.0));
        let amp = rng.random_range(0.5..1.0);
        let f0_start = voice.f0 * rng.random_range(0.9..1.15);
        let f0_end = voice.f0 * rng.random_range(0.8..1.05);
        let transition = len * 3 / 10;
        for n in 0..len {
            let t = n as f64 / len as f64;
            let f0 = (f0_start + (f0_end - f0_start) * t) * (1.0 + 0.01 * rng.random_range(-1.0..1.0));
            phase += f0 / fsf;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            // tilted pulse train, differenced for lip radiation so there is no DC
            let prev = glottal;
            glottal = voice.tilt * glottal + pulse;
            let src = glottal - prev + voice.breathiness * rng.random_range(-1.0..1.0);
            let a = (n as f64 / transition.max(1) as f64).min(1.0);
            let mut y = src;
            for k in 0..3 {
                let f = formants[k] + (next[k] - formants[k]) * a;
                y = res[k].step(y, f, BANDWIDTHS[k] * voice.tract_scale, fsf);
            }
            out.push(amp * env(n) * y);
        }
        formants = next;

        word_left -= 1;
        if word_left == 0 {
            word_left = rng.random_range(1..4);
            out.extend(std::iter::repeat_n(0.0, ms(rng.random_range(60.0..220.0))));
        }
    }
    out.extend(std::iter::repeat_n(0.0, ms(rng.random_range(60.0..150.0))));

    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x *= 0.5 / peak);
    }
    out
}

fn derive_seed(seed: u64, tag: &str) -> u64 {
    super::checksum::fnv1a64(tag.as_bytes()) ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Planned {
    split: Split,
    speaker: String,
    stem: String,
    voice: Voice,
    seed: u64,
}

/// Writes the corpus below `root` as `<split>/<speaker>/<utt>.wav` and
/// returns its catalog. Output depends only on `spec`.
pub fn generate_corpus(root: &Path, spec: &SyntheticCorpusSpec) -> Result<CorpusCatalog> {
    spec.validate()?;
    let voice_for = |speaker: &str| Voice::draw(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, speaker)));
    let mut plan = Vec::new();
    let mut add = |split: Split, speaker: &str, prefix: &str, count: usize| {
        let voice = voice_for(speaker);
        for u in 0..count {
            let stem = format!("{prefix}{u:03}");
            plan.push(Planned {
                split,
                speaker: speaker.to_string(),
                seed: derive_seed(spec.seed, &format!("{speaker}/{stem}")),
                stem,
                voice,
            });
        }
    };
    for s in 0..spec.train_speakers {
        let speaker = format!("{}{:03}", spec.speaker_prefix, s);
        add(Split::Train, &speaker, "tr", spec.train_utterances);
        add(Split::Validation, &speaker, "cv", spec.validation_utterances);
    }
    for s in 0..spec.test_speakers {
        let speaker = format!("{}t{:03}", spec.speaker_prefix, s);
        add(Split::Test, &speaker, "tt", spec.test_utterances);
    }

    plan.par_iter().try_for_each(|p| {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let duration = rng.random_range(spec.min_duration_secs..=spec.max_duration_secs);
        let samples = synthesize_utterance(p.voice, duration, spec.sample_rate, &mut rng);
        let dir = root.join(p.split.as_str()).join(&p.speaker);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_wav(&Waveform::new(samples, spec.sample_rate), &dir.join(format!("{}.wav", p.stem)))
    })?;
    CorpusCatalog::scan(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::active_speech_level;

    fn tiny() -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            train_speakers: 2,
            train_utterances: 2,
            validation_utterances: 1,
            test_speakers: 1,
            test_utterances: 2,
            ..SyntheticCorpusSpec::desk(5)
        }
    }

    #[test]
    fn layout_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ca = generate_corpus(a.path(), &tiny()).unwrap();
        let cb = generate_corpus(b.path(), &tiny()).unwrap();
        assert_eq!(ca.entries.len(), 2 * 3 + 2);
        assert_eq!(ca.in_split(Split::Test).count(), 2);
        for (x, y) in ca.entries.iter().zip(&cb.entries) {
            assert_eq!(x.utterance_id, y.utterance_id);
            let bx = std::fs::read(a.path().join(&x.path)).unwrap();
            let by = std::fs::read(b.path().join(&y.path)).unwrap();
            assert_eq!(bx, by);
        }
        for e in &ca.entries {
            let d = e.duration_secs();
            assert!((1.5..3.6).contains(&d), "{d}");
        }
    }

    #[test]
    fn utterances_have_pauses_and_active_speech() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let voice = Voice::draw(&mut rng);
        let x = synthesize_utterance(voice, 2.0, 8000, &mut rng);
        let w = Waveform::new(x.clone(), 8000);
        assert!(w.peak() > 0.49 && w.peak() <= 0.5 + 1e-12);
        let level = active_speech_level(&w).unwrap();
        let long_term = 10.0 * w.mean_square().log10();
        assert!(level > long_term, "active {level} vs long-term {long_term}");
        let silent = x.chunks(80).filter(|c| c.iter().all(|v| v.abs() < 1e-3)).count();
        assert!(silent >= 2);
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::active_speech_level;
use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Energy of the silent third speaker relative to the mean of the real ones.
pub const SILENT_SPEAKER_GAP_DB: f64 = 70.0;

/// Accepted range for requested SNRs.
pub const SNR_SANITY_RANGE_DB: (f64, f64) = (-30.0, 60.0);

/// Everything needed to regenerate one mixture from corpus files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecipe {
    pub source_ids: Vec<String>,
    /// Offsets in dB below speaker 1, one per non-reference speaker.
    pub level_offsets_db: Vec<f64>,
    /// Linear gains actually applied; filled in at synthesis time.
    #[serde(default)]
    pub source_gains: Vec<f64>,
    pub silent_speaker_present: bool,
    pub noise_id: Option<String>,
    pub noise_offset: Option<usize>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl MixtureRecipe {
    pub fn validate(&self) -> Result<()> {
        let n = self.source_ids.len();
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "recipe needs 2 or 3 real sources, has {n}"
            )));
        }
        if self.silent_speaker_present && n != 2 {
            return Err(Error::InvalidArgument(
                "silent speaker only pads two-speaker mixtures".into(),
            ));
        }
        if self.level_offsets_db.len() != n - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} level offsets for {n} speakers",
                self.level_offsets_db.len()
            )));
        }
        if self.noise_id.is_some() != self.snr_db.is_some()
            || self.noise_id.is_some() != self.noise_offset.is_some()
        {
            return Err(Error::InvalidArgument(
                "noise id, offset and SNR must be given together".into(),
            ));
        }
        Ok(())
    }

    /// Number of output channels of the mixture (real plus silent sources).
    pub fn output_sources(&self) -> usize {
        self.source_ids.len() + usize::from(self.silent_speaker_present)
    }
}

/// Mixture with its components; `mixture == sum(sources) + noise` sample-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureExample {
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
    pub noise: Option<Waveform>,
    pub recipe: MixtureRecipe,
}

impl MixtureExample {
    /// Largest absolute deviation from exact additivity.
    pub fn additivity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..self.mixture.len() {
            let mut sum: f64 = self.sources.iter().map(|s| s.samples[n]).sum();
            if let Some(noise) = &self.noise {
                sum += noise.samples[n];
            }
            worst = worst.max((self.mixture.samples[n] - sum).abs());
        }
        worst
    }

    /// The mixture without the noise component.
    pub fn clean_mixture(&self) -> Result<Waveform> {
        let parts: Vec<&Waveform> = self.sources.iter().collect();
        Waveform::sum(&parts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerMix {
    pub sources: Vec<Waveform>,
    pub mixture: Waveform,
    pub gains: Vec<f64>,
}

/// Mixes 2 or 3 utterances at the given active-level offsets below speaker 1.
///
/// Utterances are first zero-padded at the tail to a common length, so the
/// levels are measured on exactly the signals that end up in the mixture.
pub fn mix_speakers(utts: &[Waveform], level_offsets_db: &[f64]) -> Result<SpeakerMix> {
    if !(2..=3).contains(&utts.len()) {
        return Err(Error::InvalidArgument(format!(
            "need 2 or 3 utterances, got {}",
            utts.len()
        )));
    }
    if level_offsets_db.len() != utts.len() - 1 {
        return Err(Error::InvalidArgument(format!(
            "{} offsets for {} utterances",
            level_offsets_db.len(),
            utts.len()
        )));
    }
    let fs = utts[0].sample_rate;
    if utts.iter().any(|u| u.sample_rate != fs) {
        return Err(Error::InvalidArgument("sample rates differ".into()));
    }
    let len = utts.iter().map(Waveform::len).max().unwrap_or(0);
    let padded: Vec<Waveform> = utts.iter().map(|u| u.padded_to(len)).collect();
    let levels = padded
        .iter()
        .map(active_speech_level)
        .collect::<Result<Vec<_>>>()?;

    let mut gains = vec![1.0];
    for (s, offset) in level_offsets_db.iter().enumerate() {
        let target = levels[0] - offset;
        gains.push(10f64.powf((target - levels[s + 1]) / 20.0));
    }
    let sources: Vec<Waveform> = padded
        .iter()
        .zip(&gains)
        .map(|(u, &g)| if g == 1.0 { u.clone() } else { u.scaled(g) })
        .collect();
    let refs: Vec<&Waveform> = sources.iter().collect();
    let mixture = Waveform::sum(&refs)?;
    Ok(SpeakerMix {
        sources,
        mixture,
        gains,
    })
}

/// Seeded zero-mean white Gaussian noise with exactly the requested mean square.
pub fn white_noise(len: usize, mean_square: f64, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ms = x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64;
    if ms > 0.0 {
        let g = (mean_square / ms).sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
    Waveform::new(x, sample_rate)
}

/// Appends a near-silent white-noise third source 70 dB below the mean energy
/// of the two real sources.
pub fn add_silent_speaker(ex: &MixtureExample, seed: u64) -> Result<MixtureExample> {
    if ex.sources.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "silent speaker needs exactly 2 sources, found {}",
            ex.sources.len()
        )));
    }
    let base = 0.5 * (ex.sources[0].mean_square() + ex.sources[1].mean_square());
    let target = base * 10f64.powf(-SILENT_SPEAKER_GAP_DB / 10.0);
    let silent = white_noise(ex.mixture.len(), target, ex.mixture.sample_rate, seed);
    let mut out = ex.clone();
    for (m, s) in out.mixture.samples.iter_mut().zip(&silent.samples) {
        *m += s;
    }
    out.sources.push(silent);
    out.recipe.silent_speaker_present = true;
    out.recipe.seed = seed;
    Ok(out)
}

/// Gain that places noise of mean square `noise_power` at `snr_db` below a
/// speech active level of `speech_level_db`.
pub fn noise_gain_for_snr(speech_level_db: f64, noise_power: f64, snr_db: f64) -> f64 {
    (10f64.powf((speech_level_db - snr_db) / 10.0) / noise_power).sqrt()
}

/// Adds a slice of `noise` starting at `offset`, scaled so that the active
/// speech level of the noise-free mixture is `snr_db` above the noise power.
pub fn add_noise_at_snr(
    ex: &MixtureExample,
    noise: &Waveform,
    offset: usize,
    snr_db: f64,
) -> Result<MixtureExample> {
    if !(SNR_SANITY_RANGE_DB.0..=SNR_SANITY_RANGE_DB.1).contains(&snr_db) {
        return Err(Error::InvalidArgument(format!(
            "SNR {snr_db} dB outside [{}, {}]",
            SNR_SANITY_RANGE_DB.0, SNR_SANITY_RANGE_DB.1
        )));
    }
    if ex.noise.is_some() {
        return Err(Error::InvalidArgument("mixture already has noise".into()));
    }
    let len = ex.mixture.len();
    if offset.checked_add(len).is_none_or(|end| end > noise.len()) {
        return Err(Error::SignalTooShort(format!(
            "noise of {} samples cannot supply {len} samples from offset {offset}",
            noise.len()
        )));
    }
    let slice = noise.slice(offset, offset + len);
    let power = slice.mean_square();
    if power == 0.0 {
        return Err(Error::DegenerateSignal("noise slice is all zeros".into()));
    }
    let level = active_speech_level(&ex.mixture)?;
    let scaled = slice.scaled(noise_gain_for_snr(level, power, snr_db));
    let mut out = ex.clone();
    for (m, n) in out.mixture.samples.iter_mut().zip(&scaled.samples) {
        *m += n;
    }
    out.noise = Some(scaled);
    out.recipe.noise_offset = Some(offset);
    out.recipe.snr_db = Some(snr_db);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burst(len: usize, seed: u64, amp: f64) -> Waveform {
        let mut w = white_noise(len, amp * amp, 8000, seed);
        // a quiet gap in the middle so the level is not simply the RMS
        for v in &mut w.samples[len / 3..len / 2] {
            *v = 0.0;
        }
        w
    }

    fn example(utts: &[Waveform], offsets: &[f64]) -> MixtureExample {
        let mix = mix_speakers(utts, offsets).unwrap();
        MixtureExample {
            mixture: mix.mixture,
            sources: mix.sources,
            noise: None,
            recipe: MixtureRecipe {
                source_ids: (0..utts.len()).map(|i| format!("u{i}")).collect(),
                level_offsets_db: offsets.to_vec(),
                source_gains: mix.gains,
                silent_speaker_present: false,
                noise_id: None,
                noise_offset: None,
                snr_db: None,
                seed: 0,
            },
        }
    }

    #[test]
    fn identical_utterances_zero_offset() {
        let u = burst(8000, 1, 0.1);
        let mix = mix_speakers(&[u.clone(), u.clone()], &[0.0]).unwrap();
        assert_eq!(mix.sources[1], u);
        for (m, x) in mix.mixture.samples.iter().zip(&u.samples) {
            assert_eq!(*m, 2.0 * x);
        }
    }

    #[test]
    fn offset_is_exact_after_remeasurement() {
        let a = burst(12000, 2, 0.2);
        let b = burst(9000, 3, 0.05);
        let mix = mix_speakers(&[a, b], &[5.0]).unwrap();
        let l1 = active_speech_level(&mix.sources[0]).unwrap();
        let l2 = active_speech_level(&mix.sources[1]).unwrap();
        assert!((l1 - l2 - 5.0).abs() < 0.01);
        assert_eq!(mix.sources[1].len(), 12000);
    }

    #[test]
    fn rejects_bad_counts() {
        let a = burst(8000, 2, 0.2);
        assert!(mix_speakers(std::slice::from_ref(&a), &[]).is_err());
        assert!(mix_speakers(&[a.clone(), a.clone()], &[1.0, 2.0]).is_err());
        assert!(matches!(
            mix_speakers(&[a, Waveform::zeros(8000, 8000)], &[0.0]),
            Err(Error::NoActiveSpeech)
        ));
    }

    #[test]
    fn silent_speaker_energy_and_determinism() {
        let ex = example(&[burst(16000, 4, 0.1), burst(16000, 5, 0.3)], &[2.0]);
        let a = add_silent_speaker(&ex, 77).unwrap();
        let b = add_silent_speaker(&ex, 77).unwrap();
        assert_eq!(a.sources[2], b.sources[2]);
        let base = 0.5 * (a.sources[0].mean_square() + a.sources[1].mean_square());
        let ratio = a.sources[2].mean_square() / (base * 1e-7);
        assert!((ratio - 1.0).abs() < 0.01);
        assert!(a.additivity_error() <= 1e-12);
        assert!(matches!(
            add_silent_speaker(&a, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unit_noise_at_zero_dbov_has_unit_gain() {
        // full-scale square wave: active level 0 dB
        let sq: Vec<f64> = (0..16000)
            .map(|n| if (n / 16) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let level = active_speech_level(&Waveform::new(sq, 8000)).unwrap();
        assert!(level.abs() < 0.1);
        assert!((noise_gain_for_snr(0.0, 1.0, 0.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn noise_errors() {
        let ex = example(&[burst(8000, 4, 0.1), burst(8000, 5, 0.3)], &[2.0]);
        let noise = white_noise(9000, 1.0, 8000, 1);
        assert!(matches!(
            add_noise_at_snr(&ex, &noise, 2000, 0.0),
            Err(Error::SignalTooShort(_))
        ));
        assert!(matches!(
            add_noise_at_snr(&ex, &noise, 0, 80.0),
            Err(Error::InvalidArgument(_))
        ));
        let noisy = add_noise_at_snr(&ex, &noise, 1000, 5.0).unwrap();
        assert!(noisy.additivity_error() <= 1e-12);
    }
}

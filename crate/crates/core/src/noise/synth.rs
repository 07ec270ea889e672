use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lpc::{lpc_fit, LpcModel};
use crate::dsp::Waveform;
use crate::error::{Error, Result};

pub const SSN_LPC_ORDER: usize = 12;

/// Samples filtered and discarded before the SSN output starts, so the
/// all-pole filter state is in steady state.
const SSN_WARMUP: usize = 4096;

fn concat(parts: &[&Waveform]) -> Result<Waveform> {
    let fs = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?
        .sample_rate;
    if parts.iter().any(|p| p.sample_rate != fs) {
        return Err(Error::InvalidArgument(
            "corpus utterances have different sample rates".into(),
        ));
    }
    let samples = parts.iter().flat_map(|p| p.samples.iter().copied()).collect();
    Ok(Waveform::new(samples, fs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechShapedNoise {
    pub noise: Waveform,
    /// Fitted model, with its gain rescaled to the unit-RMS output.
    pub model: LpcModel,
    /// Corpus indices the model was fitted on.
    pub selected: Vec<usize>,
}

/// Speech-shaped noise: white Gaussian noise through an order-12 all-pole
/// filter fitted to `n_sentences` randomly chosen corpus utterances, scaled to
/// unit RMS.
pub fn gen_ssn(
    corpus: &[Waveform],
    n_sentences: usize,
    duration_secs: f64,
    seed: u64,
) -> Result<SpeechShapedNoise> {
    if corpus.is_empty() {
        return Err(Error::InsufficientCorpus("empty corpus".into()));
    }
    if n_sentences == 0 || n_sentences > corpus.len() {
        return Err(Error::InsufficientCorpus(format!(
            "cannot pick {n_sentences} sentences from {}",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(n_sentences);
    idx.sort_unstable();

    let parts: Vec<&Waveform> = idx.iter().map(|&i| &corpus[i]).collect();
    let joined = concat(&parts)?;
    let fs = joined.sample_rate;
    let mut model = lpc_fit(&joined, SSN_LPC_ORDER)?;

    let len = (duration_secs * fs as f64).round() as usize;
    if len == 0 {
        return Err(Error::InvalidArgument("zero-length noise requested".into()));
    }
    let excitation: Vec<f64> = (0..len + SSN_WARMUP)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut y = model.synthesize(&excitation);
    y.drain(..SSN_WARMUP);
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    assert!(rms > 0.0, "autocorrelation LPC fit produced a silent filter");
    y.iter_mut().for_each(|v| *v /= rms);
    model.gain /= rms;
    Ok(SpeechShapedNoise {
        noise: Waveform::new(y, fs),
        model,
        selected: idx,
    })
}

/// Random partition of the corpus into `n_groups` concatenations, each scaled
/// to unit total energy (before any truncation).
pub fn babble_groups(corpus: &[Waveform], n_groups: usize, seed: u64) -> Result<Vec<Waveform>> {
    if n_groups == 0 {
        return Err(Error::InvalidArgument("need at least one group".into()));
    }
    if corpus.len() < n_groups {
        return Err(Error::InsufficientCorpus(format!(
            "{} utterances for {n_groups} groups",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut rng);
    let mut groups: Vec<Vec<&Waveform>> = vec![Vec::new(); n_groups];
    for (pos, &i) in idx.iter().enumerate() {
        groups[pos % n_groups].push(&corpus[i]);
    }
    groups
        .iter()
        .map(|g| {
            if g.is_empty() {
                return Err(Error::InsufficientCorpus("empty babble group".into()));
            }
            let joined = concat(g)?;
            let e = joined.energy();
            if e == 0.0 {
                return Err(Error::DegenerateSignal("silent babble group".into()));
            }
            Ok(joined.scaled(1.0 / e.sqrt()))
        })
        .collect()
}

/// Multi-talker babble: unit-energy groups truncated to the shortest one and
/// summed.
pub fn gen_bbl(corpus: &[Waveform], n_groups: usize, seed: u64) -> Result<Waveform> {
    let groups = babble_groups(corpus, n_groups, seed)?;
    let len = groups.iter().map(Waveform::len).min().unwrap_or(0);
    let mut out = vec![0.0; len];
    for g in &groups {
        for (o, x) in out.iter_mut().zip(&g.samples[..len]) {
            *o += x;
        }
    }
    Ok(Waveform::new(out, groups[0].sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::white_noise;

    fn corpus(n: usize) -> Vec<Waveform> {
        (0..n)
            .map(|i| white_noise(800 + 37 * i, 0.01 * (i + 1) as f64, 8000, i as u64))
            .collect()
    }

    #[test]
    fn ssn_is_deterministic_and_unit_rms() {
        let c = corpus(8);
        let a = gen_ssn(&c, 4, 1.0, 5).unwrap();
        let b = gen_ssn(&c, 4, 1.0, 5).unwrap();
        assert_eq!(a.noise, b.noise);
        assert_eq!(a.noise.len(), 8000);
        assert!((a.noise.mean_square() - 1.0).abs() < 1e-12);
        assert_eq!(a.selected.len(), 4);
        let c2 = gen_ssn(&c, 4, 1.0, 6).unwrap();
        assert_ne!(a.noise, c2.noise);
    }

    #[test]
    fn ssn_errors() {
        assert!(gen_ssn(&[], 1, 1.0, 0).is_err());
        assert!(gen_ssn(&corpus(3), 4, 1.0, 0).is_err());
    }

    #[test]
    fn single_group_is_normalised_concatenation() {
        let c = corpus(5);
        let out = gen_bbl(&c, 1, 3).unwrap();
        let total: usize = c.iter().map(Waveform::len).sum();
        assert_eq!(out.len(), total);
        assert!((out.energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn groups_have_unit_energy_before_truncation() {
        let groups = babble_groups(&corpus(12), 3, 4).unwrap();
        assert_eq!(groups.len(), 3);
        for g in &groups {
            assert!((g.energy() - 1.0).abs() < 1e-12);
        }
        let out = gen_bbl(&corpus(12), 3, 4).unwrap();
        assert_eq!(out.len(), groups.iter().map(Waveform::len).min().unwrap());
    }

    #[test]
    fn babble_power_adds() {
        let c = corpus(30);
        let groups = babble_groups(&c, 6, 8).unwrap();
        let len = groups.iter().map(Waveform::len).min().unwrap();
        let sum_power: f64 = groups.iter().map(|g| g.slice(0, len).mean_square()).sum();
        let out = gen_bbl(&c, 6, 8).unwrap();
        let ratio_db = 10.0 * (out.mean_square() / sum_power).log10();
        assert!(ratio_db.abs() < 3.0, "{ratio_db}");
    }

    #[test]
    fn too_few_utterances() {
        assert!(matches!(
            gen_bbl(&corpus(2), 3, 0),
            Err(Error::InsufficientCorpus(_))
        ));
    }
}

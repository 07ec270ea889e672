//! Glue between stored datasets, the model and the evaluation protocol.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_wav, synthesize_noise, write_noise, CorpusCatalog, DatasetIndex, IndexEntry, NoiseKind, NoiseManifest};
use crate::dsp::{stft_edge_padded, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::levels::MixtureExample;
use crate::masks::{ipsf_mask, phase_difference, ORACLE_MASK_CLAMP};
use crate::metrics::{evaluate_utterance, Condition, EvalResult, ORACLE_MODEL_ID};
use crate::model::{resynthesize, separate, BlstmNetwork, TrainingUtterance};
use crate::noise::Split;

/// How the noise files of an experiment are synthesised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSynthSpec {
    pub ssn_sentences: usize,
    pub ssn_duration_secs: f64,
    pub bbl_groups: usize,
    pub ratios: (f64, f64, f64),
}

impl Default for NoiseSynthSpec {
    fn default() -> Self {
        Self {
            ssn_sentences: 100,
            ssn_duration_secs: 90.0,
            bbl_groups: 6,
            ratios: (8.0, 1.0, 1.0),
        }
    }
}

impl NoiseSynthSpec {
    pub fn units(&self, kind: NoiseKind) -> usize {
        match kind {
            NoiseKind::Ssn => self.ssn_sentences,
            NoiseKind::Bbl => self.bbl_groups,
            NoiseKind::Recorded => 0,
        }
    }
}

/// Synthesises one noise from every utterance of `source` and writes
/// `<out_dir>/<id>.wav` and `<out_dir>/<id>.json`.
pub fn synth_noise_file(
    source: &CorpusCatalog,
    kind: NoiseKind,
    id: &str,
    spec: &NoiseSynthSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<NoiseManifest> {
    let corpus = source.load_all()?;
    let units = spec.units(kind);
    let noise = synthesize_noise(kind, &corpus, units, spec.ssn_duration_secs, seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let m = write_noise(
        &noise,
        id,
        kind,
        seed,
        units,
        &source.root,
        &out_dir.join(format!("{id}.wav")),
        spec.ratios,
    )?;
    m.save(&out_dir.join(format!("{id}.json")))?;
    Ok(m)
}

/// Partitions a recorded noise (street, cafeteria, ...) for use in manifests.
pub fn import_noise_file(wav: &Path, id: &str, ratios: (f64, f64, f64), out_dir: &Path) -> Result<NoiseManifest> {
    let noise = read_wav(wav)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let m = write_noise(
        &noise,
        id,
        NoiseKind::Recorded,
        0,
        1,
        wav,
        &out_dir.join(format!("{id}.wav")),
        ratios,
    )?;
    m.save(&out_dir.join(format!("{id}.json")))?;
    Ok(m)
}

/// Real (non-silent) speakers of an example; the silent speaker, when
/// present, is always the last source.
pub fn reference_sources(ex: &MixtureExample) -> &[Waveform] {
    &ex.sources[..ex.recipe.source_ids.len()]
}

pub fn load_examples(index: &DatasetIndex, split: Split) -> Result<Vec<(IndexEntry, MixtureExample)>> {
    let entries: Vec<&IndexEntry> = index.in_split(split).collect();
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries
        .par_iter()
        .map(|e| index.load_example(e).map(|ex| ((*e).clone(), ex)))
        .collect()
}

pub fn training_set(examples: &[(IndexEntry, MixtureExample)], cfg: &StftConfig) -> Result<Vec<TrainingUtterance>> {
    examples
        .par_iter()
        .map(|(e, ex)| TrainingUtterance::from_example(&e.id, ex, cfg))
        .collect()
}

/// Separates with clamped IPSF masks built from the true sources.
pub fn oracle_separate(ex: &MixtureExample, cfg: &StftConfig) -> Result<Vec<Waveform>> {
    let mix = stft_edge_padded(&ex.mixture, cfg)?;
    let r = mix.magnitude();
    let phase = mix.phase();
    let masks = ex
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let spec = stft_edge_padded(s, cfg)?;
            let phi = phase_difference(&phase, &spec.phase())?;
            let m = ipsf_mask(&spec.magnitude(), &phi, &r)?;
            let mut m = m.clamped(ORACLE_MASK_CLAMP.0, ORACLE_MASK_CLAMP.1);
            m.source_index = i;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    resynthesize(&masks, &mix)
}

#[derive(Debug, Clone, Copy)]
pub enum Separator<'a> {
    Network(&'a BlstmNetwork),
    Oracle,
}

impl Separator<'_> {
    pub fn run(&self, ex: &MixtureExample, cfg: &StftConfig) -> Result<Vec<Waveform>> {
        match self {
            Separator::Network(net) => separate(net, &ex.mixture, cfg),
            Separator::Oracle => oracle_separate(ex, cfg),
        }
    }
}

/// Separates and scores every example; results keep the input order.
pub fn evaluate_examples(
    examples: &[(IndexEntry, MixtureExample)],
    separator: Separator<'_>,
    model: &str,
    cfg: &StftConfig,
) -> Result<Vec<EvalResult>> {
    let model = match separator {
        Separator::Oracle => ORACLE_MODEL_ID,
        Separator::Network(_) => model,
    };
    examples
        .par_iter()
        .map(|(e, ex)| {
            let outputs = separator.run(ex, cfg)?;
            let cond = Condition {
                utterance_id: e.id.clone(),
                model: model.to_string(),
                noise: e.recipe.noise_id.clone().unwrap_or_else(|| "clean".into()),
                snr_db: e.recipe.snr_db,
            };
            evaluate_utterance(&outputs, reference_sources(ex), &ex.mixture, cond)
        })
        .collect()
}

use serde::{Deserialize, Serialize};

use super::estoi::estoi;
use super::sdr::SdrReference;
use super::SDR_FILTER_TAPS;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::masks::{permutations, PermutationAssignment, PermutationScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Sdr,
    Estoi,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Sdr, Metric::Estoi];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Sdr => "SDR",
            Metric::Estoi => "ESTOI",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::Sdr => "dB",
            Metric::Estoi => "",
        }
    }
}

/// Best pairing of outputs with references under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMatch {
    /// Output indices that took part in the search, ascending.
    pub kept_outputs: Vec<usize>,
    /// `mapping[i]` is the reference matched to `kept_outputs[i]`.
    pub permutation: PermutationAssignment,
    /// Score of each reference against its matched output.
    pub per_source: Vec<f64>,
    pub mean: f64,
}

impl OutputMatch {
    /// Output index matched to each reference.
    pub fn output_for_reference(&self) -> Vec<usize> {
        let mut out = vec![0; self.per_source.len()];
        for (i, &t) in self.permutation.mapping.iter().enumerate() {
            out[t] = self.kept_outputs[i];
        }
        out
    }
}

/// Score matrix `scores[o][t]` of every output against every reference.
pub fn score_matrix(outputs: &[Waveform], references: &[Waveform], metric: Metric) -> Result<Vec<Vec<f64>>> {
    match metric {
        Metric::Sdr => {
            let refs = references
                .iter()
                .map(|r| SdrReference::new(r, SDR_FILTER_TAPS))
                .collect::<Result<Vec<_>>>()?;
            outputs
                .iter()
                .map(|o| refs.iter().map(|r| r.sdr(o)).collect())
                .collect()
        }
        Metric::Estoi => outputs
            .iter()
            .map(|o| references.iter().map(|r| estoi(r, o)).collect())
            .collect(),
    }
}

/// Index of the output with the least energy; ties go to the lowest index.
pub fn least_energy_output(outputs: &[Waveform]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, o) in outputs.iter().enumerate() {
        let e = o.energy();
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((i, e));
        }
    }
    best.map(|(i, _)| i)
}

/// Permutation of the `kept` outputs maximising the summed score; ties go to
/// the lexicographically first.
pub fn match_scores(scores: &[Vec<f64>], kept: &[usize]) -> (PermutationAssignment, Vec<f64>) {
    let n = kept.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in permutations(n) {
        let total: f64 = p.iter().enumerate().map(|(i, &t)| scores[kept[i]][t]).sum();
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, p));
        }
    }
    let mapping = best.map(|(_, p)| p).expect("at least one permutation");
    let mut per_source = vec![0.0; n];
    for (i, &t) in mapping.iter().enumerate() {
        per_source[t] = scores[kept[i]][t];
    }
    (
        PermutationAssignment {
            mapping,
            scope: PermutationScope::Utterance,
        },
        per_source,
    )
}

/// Matches outputs to references under `metric`. Surplus outputs are
/// discarded in order of least energy before the permutation search.
pub fn evaluate_outputs(outputs: &[Waveform], references: &[Waveform], metric: Metric) -> Result<OutputMatch> {
    if !(2..=3).contains(&references.len()) {
        return Err(Error::InvalidArgument(format!(
            "evaluation needs 2 or 3 references, got {}",
            references.len()
        )));
    }
    if outputs.len() < references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} outputs for {} references",
            outputs.len(),
            references.len()
        )));
    }
    let mut kept: Vec<usize> = (0..outputs.len()).collect();
    while kept.len() > references.len() {
        let energies: Vec<f64> = kept.iter().map(|&i| outputs[i].energy()).collect();
        let drop = (0..kept.len())
            .min_by(|&a, &b| energies[a].total_cmp(&energies[b]))
            .expect("non-empty");
        kept.remove(drop);
    }
    let scores = score_matrix(outputs, references, metric)?;
    let (permutation, per_source) = match_scores(&scores, &kept);
    let mean = per_source.iter().sum::<f64>() / per_source.len() as f64;
    Ok(OutputMatch {
        kept_outputs: kept,
        permutation,
        per_source,
        mean,
    })
}

/// Processed and unprocessed scores of one mixture under one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome {
    pub matched: OutputMatch,
    /// Each reference scored against the unprocessed mixture.
    pub unprocessed: Vec<f64>,
    /// Mean over references of processed minus unprocessed.
    pub improvement: f64,
}

/// Evaluation of one separated mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub utterance_id: String,
    pub model: String,
    pub noise: String,
    pub snr_db: Option<f64>,
    pub speakers: usize,
    pub sdr_improvement_db: f64,
    pub estoi_improvement: f64,
    pub sdr: MetricOutcome,
    pub estoi: MetricOutcome,
}

impl EvalResult {
    pub fn outcome(&self, metric: Metric) -> &MetricOutcome {
        match metric {
            Metric::Sdr => &self.sdr,
            Metric::Estoi => &self.estoi,
        }
    }
}

/// Condition labels attached to an [`EvalResult`].
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub utterance_id: String,
    pub model: String,
    pub noise: String,
    pub snr_db: Option<f64>,
}

fn outcome(outputs: &[Waveform], refs: &[Waveform], mixture: &Waveform, metric: Metric) -> Result<MetricOutcome> {
    let matched = evaluate_outputs(outputs, refs, metric)?;
    let unprocessed = score_matrix(std::slice::from_ref(mixture), refs, metric)?.remove(0);
    let improvement = matched
        .per_source
        .iter()
        .zip(&unprocessed)
        .map(|(p, u)| p - u)
        .sum::<f64>()
        / refs.len() as f64;
    Ok(MetricOutcome {
        matched,
        unprocessed,
        improvement,
    })
}

/// Scores separated outputs against the real (non-silent) references under
/// both metrics, with improvements relative to the unprocessed mixture.
pub fn evaluate_utterance(
    outputs: &[Waveform],
    references: &[Waveform],
    mixture: &Waveform,
    condition: Condition,
) -> Result<EvalResult> {
    let sdr = outcome(outputs, references, mixture, Metric::Sdr)?;
    let estoi = outcome(outputs, references, mixture, Metric::Estoi)?;
    Ok(EvalResult {
        utterance_id: condition.utterance_id,
        model: condition.model,
        noise: condition.noise,
        snr_db: condition.snr_db,
        speakers: references.len(),
        sdr_improvement_db: sdr.improvement,
        estoi_improvement: estoi.improvement,
        sdr,
        estoi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::white_noise;

    fn refs(n: usize, len: usize) -> Vec<Waveform> {
        (0..n).map(|i| white_noise(len, 0.1 * (i + 1) as f64, 8000, 40 + i as u64)).collect()
    }

    #[test]
    fn two_references_drop_the_quiet_output() {
        let r = refs(2, 2000);
        let outputs = vec![r[1].clone(), white_noise(2000, 1e-9, 8000, 1), r[0].clone()];
        let m = evaluate_outputs(&outputs, &r, Metric::Sdr).unwrap();
        assert_eq!(m.kept_outputs, vec![0, 2]);
        assert_eq!(m.output_for_reference(), vec![2, 0]);
        assert!(m.per_source.iter().all(|&s| s == 100.0));
    }

    #[test]
    fn three_reference_shuffle_is_recovered() {
        let r = refs(3, 2000);
        let shuffle = [2, 0, 1];
        let outputs: Vec<_> = shuffle.iter().map(|&i| r[i].clone()).collect();
        let m = evaluate_outputs(&outputs, &r, Metric::Sdr).unwrap();
        assert_eq!(m.permutation.mapping, shuffle.to_vec());
        assert_eq!(m.mean, 100.0);
    }

    #[test]
    fn rejects_bad_reference_counts() {
        let r = refs(1, 1000);
        assert!(evaluate_outputs(&r, &r, Metric::Sdr).is_err());
    }
}

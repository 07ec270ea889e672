use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{BlstmNetwork, FeatureNorm};
use crate::dsp::{stft_edge_padded, MagnitudeSpectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::levels::MixtureExample;
use crate::masks::{
    phase_difference, upit_loss, upit_loss_gradient, upit_permutation, PermutationAssignment,
    SourceTarget,
};

/// Learning-rate schedule and minibatch settings for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    /// Multiplies the gradient summed over every frame and bin of a minibatch.
    pub lr_initial: f64,
    pub lr_decay: f64,
    pub lr_floor: f64,
    pub max_epochs: usize,
    pub minibatch_utterances: usize,
    pub seed: u64,
    /// Heavy-ball momentum; 0 is plain SGD.
    #[serde(default)]
    pub momentum: f64,
    /// Global L2 clip applied to each minibatch gradient.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl TrainSchedule {
    pub fn full_scale() -> Self {
        Self {
            lr_initial: 2e-5,
            lr_decay: 0.7,
            lr_floor: 1e-10,
            max_epochs: 200,
            minibatch_utterances: 8,
            seed: 0,
            momentum: 0.0,
            clip_norm: None,
        }
    }

    /// Settings under which the desk network converges within 50 epochs.
    pub fn desk() -> Self {
        Self {
            lr_initial: 1e-4,
            max_epochs: 50,
            momentum: 0.9,
            clip_norm: Some(100.0),
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad(format!("lr_decay {} outside (0, 1)", self.lr_decay));
        }
        if !(self.lr_initial > 0.0 && self.lr_floor < self.lr_initial) {
            return bad(format!(
                "need 0 < lr_initial and lr_floor < lr_initial, got {} and {}",
                self.lr_initial, self.lr_floor
            ));
        }
        if self.minibatch_utterances == 0 || self.max_epochs == 0 {
            return bad("minibatch size and epoch count must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip norm must be positive".into());
        }
        Ok(())
    }
}

/// Network input and loss targets for one mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingUtterance {
    pub id: String,
    pub mixture: MagnitudeSpectrogram,
    pub targets: Vec<SourceTarget>,
}

impl TrainingUtterance {
    /// Mixture magnitude and phase-projected source targets. Noise is not a
    /// target.
    pub fn from_example(id: impl Into<String>, ex: &MixtureExample, cfg: &StftConfig) -> Result<Self> {
        let mix = stft_edge_padded(&ex.mixture, cfg)?;
        let mix_phase = mix.phase();
        let targets = ex
            .sources
            .iter()
            .map(|s| {
                let spec = stft_edge_padded(s, cfg)?;
                let phi = phase_difference(&mix_phase, &spec.phase())?;
                SourceTarget::new(&spec.magnitude(), &phi)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: id.into(),
            mixture: mix.magnitude(),
            targets,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.mixture.frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    LearningRateFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Rate used during this epoch.
    pub learning_rate: f64,
    /// Mean normalised uPIT loss over training utterances, dropout active.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Rate the next epoch would have used.
    pub final_learning_rate: f64,
}

impl TrainHistory {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

struct UtteranceGrad {
    total: f64,
    normalized: f64,
    grad: Vec<f64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn dropout_seed(base: u64, epoch: usize, index: usize) -> u64 {
    splitmix64(splitmix64(base ^ epoch as u64).wrapping_add(index as u64))
}

fn check_utterance(net: &BlstmNetwork, u: &TrainingUtterance) -> Result<()> {
    let cfg = net.config();
    if u.targets.len() != cfg.output_sources {
        return Err(Error::DimensionMismatch(format!(
            "utterance {} has {} targets, network has {} outputs",
            u.id,
            u.targets.len(),
            cfg.output_sources
        )));
    }
    if u.mixture.num_bins() != cfg.input_dim || u.mixture.num_bins() != cfg.output_dim_per_source {
        return Err(Error::DimensionMismatch(format!(
            "utterance {} has {} bins, network expects {}",
            u.id,
            u.mixture.num_bins(),
            cfg.input_dim
        )));
    }
    Ok(())
}

/// Utterance-level PIT loss of one utterance and the pairing that achieves it.
pub fn utterance_loss(
    net: &BlstmNetwork,
    u: &TrainingUtterance,
) -> Result<(f64, PermutationAssignment)> {
    let masks = net.infer(u.features())?;
    let perm = upit_permutation(&masks, &u.mixture, &u.targets)?;
    let loss = upit_loss(&masks, &u.mixture, &u.targets, &perm)?;
    Ok((loss.normalized, perm))
}

fn utterance_gradient(net: &BlstmNetwork, u: &TrainingUtterance, seed: u64) -> Result<UtteranceGrad> {
    let (masks, cache) = net.forward(u.features(), true, seed)?;
    let perm = upit_permutation(&masks, &u.mixture, &u.targets)?;
    let loss = upit_loss(&masks, &u.mixture, &u.targets, &perm)?;
    let mask_grads = upit_loss_gradient(&masks, &u.mixture, &u.targets, &perm)?;
    let grad = net.backward(&cache, &mask_grads)?;
    Ok(UtteranceGrad {
        total: loss.total,
        normalized: loss.normalized,
        grad,
    })
}

/// Mean normalised loss over `data` in inference mode.
pub fn evaluate_loss(net: &BlstmNetwork, data: &[TrainingUtterance]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses = data
        .par_iter()
        .map(|u| utterance_loss(net, u).map(|(l, _)| l))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Minibatch SGD on the uPIT loss.
///
/// The learning rate is multiplied by `lr_decay` after every epoch whose mean
/// training loss exceeds that of the previous epoch. Training stops when the
/// rate falls below `lr_floor` or after `max_epochs`. When the network has no
/// feature normalisation one is fitted on `train_set` first.
pub fn train(
    net: &mut BlstmNetwork,
    train_set: &[TrainingUtterance],
    validation_set: &[TrainingUtterance],
    schedule: &TrainSchedule,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    schedule.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for u in train_set.iter().chain(validation_set) {
        check_utterance(net, u)?;
    }
    if net.feature_norm().is_none() {
        let norm = FeatureNorm::fit(train_set.iter().map(TrainingUtterance::features))?;
        net.set_feature_norm(Some(norm))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut velocity = vec![0.0; net.parameters().len()];
    let mut lr = schedule.lr_initial;
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=schedule.max_epochs {
        if lr < schedule.lr_floor {
            stop_reason = StopReason::LearningRateFloor;
            break;
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(schedule.minibatch_utterances) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    utterance_gradient(net, &train_set[i], dropout_seed(schedule.seed, epoch, i))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; velocity.len()];
            for (r, &i) in results.iter().zip(batch) {
                if !r.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        detail: format!("utterance {}", train_set[i].id),
                    });
                }
                loss_sum += r.normalized;
                for (g, v) in grad.iter_mut().zip(&r.grad) {
                    *g += v;
                }
            }
            if let Some(max) = schedule.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        detail: "gradient norm".into(),
                    });
                }
                if norm > max {
                    let s = max / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            let params = net.parameters_mut();
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = schedule.momentum * *v - lr * g;
                *p += *v;
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: "mean training loss".into(),
            });
        }
        let validation_loss = if validation_set.is_empty() {
            None
        } else {
            Some(evaluate_loss(net, validation_set)?)
        };
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            validation_loss,
        };
        on_epoch(&record);
        if epochs.last().is_some_and(|prev| train_loss > prev.train_loss) {
            lr *= schedule.lr_decay;
        }
        epochs.push(record);
    }
    Ok(TrainHistory {
        epochs,
        stop_reason,
        final_learning_rate: lr,
    })
}

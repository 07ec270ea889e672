use ndarray::{Array2, Zip};

use super::permutation::{argmin_assignment, check_source_count};
use super::{Mask, PermutationAssignment, PermutationScope, SourceTarget};
use crate::dsp::MagnitudeSpectrogram;
use crate::error::{Error, Result};

/// One frame of a source target: magnitude and mixture-minus-source phase.
#[derive(Debug, Clone, Copy)]
pub struct FrameTarget<'a> {
    pub magnitude: &'a [f64],
    pub phase_diff: &'a [f64],
}

fn frame_cost(mask: &[f64], r: &[f64], target: &FrameTarget<'_>) -> f64 {
    mask.iter()
        .zip(r)
        .zip(target.magnitude.iter().zip(target.phase_diff))
        .map(|((m, r), (a, p))| {
            let d = m * r - a * p.cos();
            d * d
        })
        .sum()
}

fn check_frame_inputs(masks: &[&[f64]], r: &[f64], targets: &[FrameTarget<'_>]) -> Result<()> {
    if masks.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} masks but {} targets",
            masks.len(),
            targets.len()
        )));
    }
    let n = r.len();
    let ok = masks.iter().all(|m| m.len() == n)
        && targets
            .iter()
            .all(|t| t.magnitude.len() == n && t.phase_diff.len() == n);
    if !ok {
        return Err(Error::DimensionMismatch(format!(
            "frame vectors must all have {n} bins"
        )));
    }
    Ok(())
}

/// Phase-sensitive approximation loss of one frame with output `s` paired to
/// target `s`.
pub fn psa_loss_frame(masks: &[&[f64]], r: &[f64], targets: &[FrameTarget<'_>]) -> Result<f64> {
    check_frame_inputs(masks, r, targets)?;
    Ok(masks
        .iter()
        .zip(targets)
        .map(|(m, t)| frame_cost(m, r, t))
        .sum())
}

/// Frame-level permutation invariant loss: the minimum PSA loss over all
/// output-target pairings, with the minimising pairing.
pub fn pit_frame_loss(
    masks: &[&[f64]],
    r: &[f64],
    targets: &[FrameTarget<'_>],
) -> Result<(f64, PermutationAssignment)> {
    check_frame_inputs(masks, r, targets)?;
    check_source_count(masks.len())?;
    let cost: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| targets.iter().map(|t| frame_cost(m, r, t)).collect())
        .collect();
    let (loss, mapping) = argmin_assignment(&cost);
    Ok((
        loss,
        PermutationAssignment {
            mapping,
            scope: PermutationScope::Frame,
        },
    ))
}

fn check_utterance_inputs(
    masks: &[Mask],
    r: &MagnitudeSpectrogram,
    targets: &[SourceTarget],
) -> Result<()> {
    if masks.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} masks but {} targets",
            masks.len(),
            targets.len()
        )));
    }
    for m in masks {
        r.same_shape(&m.frames, "mask vs mixture magnitude")?;
    }
    for t in targets {
        r.same_shape(&t.projected, "target vs mixture magnitude")?;
    }
    check_source_count(masks.len())
}

/// Utterance-level squared error between every output and every target:
/// `cost[s][t] = sum_i || m_s,i * r_i - a_t,i cos(phi_t,i) ||^2`.
pub fn pairwise_costs(
    masks: &[Mask],
    r: &MagnitudeSpectrogram,
    targets: &[SourceTarget],
) -> Result<Vec<Vec<f64>>> {
    check_utterance_inputs(masks, r, targets)?;
    let estimates: Vec<Array2<f64>> = masks.iter().map(|m| &m.frames * &r.frames).collect();
    Ok(estimates
        .iter()
        .map(|est| {
            targets
                .iter()
                .map(|t| {
                    let mut acc = 0.0;
                    Zip::from(est).and(&t.projected).for_each(|&e, &p| {
                        let d = e - p;
                        acc += d * d;
                    });
                    acc
                })
                .collect()
        })
        .collect())
}

/// The single output-target pairing minimising the summed PSA error over the
/// whole utterance. Ties go to the lexicographically smallest pairing.
pub fn upit_permutation(
    masks: &[Mask],
    r: &MagnitudeSpectrogram,
    targets: &[SourceTarget],
) -> Result<PermutationAssignment> {
    let cost = pairwise_costs(masks, r, targets)?;
    let (_, mapping) = argmin_assignment(&cost);
    Ok(PermutationAssignment {
        mapping,
        scope: PermutationScope::Utterance,
    })
}

/// Per-frame frame-level PIT losses (each frame picks its own pairing).
pub fn frame_pit_losses(
    masks: &[Mask],
    r: &MagnitudeSpectrogram,
    targets: &[SourceTarget],
) -> Result<Vec<(f64, PermutationAssignment)>> {
    check_utterance_inputs(masks, r, targets)?;
    let n_src = masks.len();
    let mut out = Vec::with_capacity(r.num_frames());
    for i in 0..r.num_frames() {
        let ri = r.frames.row(i);
        let cost: Vec<Vec<f64>> = (0..n_src)
            .map(|s| {
                let m = masks[s].frames.row(i);
                targets
                    .iter()
                    .map(|t| {
                        let p = t.projected.row(i);
                        m.iter()
                            .zip(ri.iter())
                            .zip(p.iter())
                            .map(|((m, r), p)| {
                                let d = m * r - p;
                                d * d
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let (loss, mapping) = argmin_assignment(&cost);
        out.push((
            loss,
            PermutationAssignment {
                mapping,
                scope: PermutationScope::Frame,
            },
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpitLoss {
    /// Raw sum over sources, frames and bins.
    pub total: f64,
    /// Raw per-frame losses under the fixed pairing.
    pub per_frame: Vec<f64>,
    /// `total / (frames * bins * sources)`, used for reporting.
    pub normalized: f64,
}

/// Utterance loss with the pairing held fixed for every frame.
pub fn upit_loss(
    masks: &[Mask],
    r: &MagnitudeSpectrogram,
    targets: &[SourceTarget],
    perm: &PermutationAssignment,
) -> Result<UpitLoss> {
    check_utterance_inputs(masks, r, targets)?;
    perm.validate(masks.len())?;
    let mut per_frame = vec![0.0; r.num_frames()];
    for (s, mask) in masks.iter().enumerate() {
        let target = &targets[perm.mapping[s]].projected;
        for (i, acc) in per_frame.iter_mut().enumerate() {
            let frame: f64 = mask
                .frames
                .row(i)
                .iter()
                .zip(r.frames.row(i))
                .zip(target.row(i))
                .map(|((m, r), p)| {
                    let d = m * r - p;
                    d * d
                })
                .sum();
            *acc += frame;
        }
    }
    let total: f64 = per_frame.iter().sum();
    let count = (r.num_frames() * r.num_bins() * masks.len()) as f64;
    Ok(UpitLoss {
        total,
        per_frame,
        normalized: total / count,
    })
}

/// Gradient of the raw utterance loss with respect to each output mask:
/// `2 (m_s * r - a_theta(s) cos(phi_theta(s))) * r`.
pub fn upit_loss_gradient(
    masks: &[Mask],
    r: &MagnitudeSpectrogram,
    targets: &[SourceTarget],
    perm: &PermutationAssignment,
) -> Result<Vec<Array2<f64>>> {
    check_utterance_inputs(masks, r, targets)?;
    perm.validate(masks.len())?;
    Ok(masks
        .iter()
        .enumerate()
        .map(|(s, mask)| {
            let target = &targets[perm.mapping[s]].projected;
            let mut g = Array2::zeros(r.frames.dim());
            Zip::from(&mut g)
                .and(&mask.frames)
                .and(&r.frames)
                .and(target)
                .for_each(|g, &m, &r, &p| *g = 2.0 * (m * r - p) * r);
            g
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::dsp::StftConfig;

    fn mag(frames: Array2<f64>) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            frames,
            config: StftConfig::default(),
            original_length: 0,
            sample_rate: 8000,
        }
    }

    #[test]
    fn psa_two_source_hand_example() {
        let r = [1.0, 2.0];
        let zero = [0.0, 0.0];
        let a1 = [1.0, 0.0];
        let a2 = [0.0, 2.0];
        let m = [0.5, 0.5];
        let targets = [
            FrameTarget {
                magnitude: &a1,
                phase_diff: &zero,
            },
            FrameTarget {
                magnitude: &a2,
                phase_diff: &zero,
            },
        ];
        let loss = psa_loss_frame(&[&m, &m], &r, &targets).unwrap();
        assert!((loss - 2.5).abs() < 1e-15);
    }

    #[test]
    fn psa_zero_mask_gives_target_energy() {
        let r = [3.0, 1.0, 2.0];
        let zero = [0.0; 3];
        let a1 = [1.0, 2.0, 0.5];
        let a2 = [0.0, 1.0, 1.0];
        let targets = [
            FrameTarget {
                magnitude: &a1,
                phase_diff: &zero,
            },
            FrameTarget {
                magnitude: &a2,
                phase_diff: &zero,
            },
        ];
        let loss = psa_loss_frame(&[&zero, &zero], &r, &targets).unwrap();
        assert!((loss - (1.0 + 4.0 + 0.25 + 1.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn psa_count_mismatch() {
        let r = [1.0];
        let m = [1.0];
        assert!(psa_loss_frame(&[&m, &m], &r, &[]).is_err());
    }

    #[test]
    fn pit_recovers_swap() {
        let r = [1.0, 1.0];
        let zero = [0.0, 0.0];
        let a1 = [1.0, 0.0];
        let a2 = [0.0, 1.0];
        // output 0 matches target 1 and vice versa
        let targets = [
            FrameTarget {
                magnitude: &a1,
                phase_diff: &zero,
            },
            FrameTarget {
                magnitude: &a2,
                phase_diff: &zero,
            },
        ];
        let (loss, perm) = pit_frame_loss(&[&a2, &a1], &r, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(perm.mapping, vec![1, 0]);
    }

    #[test]
    fn pit_single_source_equals_psa() {
        let r = [2.0, 0.5];
        let p = [0.3, -0.7];
        let a = [1.0, 1.5];
        let m = [0.2, 0.9];
        let t = [FrameTarget {
            magnitude: &a,
            phase_diff: &p,
        }];
        let psa = psa_loss_frame(&[&m], &r, &t).unwrap();
        let (pit, perm) = pit_frame_loss(&[&m], &r, &t).unwrap();
        assert_eq!(psa, pit);
        assert_eq!(perm.mapping, vec![0]);
    }

    #[test]
    fn pit_rejects_large_source_count() {
        let r = [1.0];
        let m = [1.0];
        let z = [0.0];
        let t = FrameTarget {
            magnitude: &m,
            phase_diff: &z,
        };
        let masks = [&m[..]; 5];
        assert!(matches!(
            pit_frame_loss(&masks, &r, &[t; 5]),
            Err(Error::TooManySources(5))
        ));
    }

    #[test]
    fn gradient_scalar_chain_rule() {
        let r = mag(array![[2.0]]);
        let masks = [Mask::new(array![[1.0]], 0)];
        let targets = [SourceTarget::from_projected(array![[1.0]])];
        let perm = PermutationAssignment::identity(1, PermutationScope::Utterance);
        let g = upit_loss_gradient(&masks, &r, &targets, &perm).unwrap();
        assert_eq!(g[0][[0, 0]], 4.0);
    }

    #[test]
    fn upit_recovers_fixed_shuffle() {
        let r = mag(array![[1.0, 2.0], [3.0, 1.0], [0.5, 0.5]]);
        let t0 = array![[0.2, 1.0], [1.0, 0.1], [0.3, 0.0]];
        let t1 = array![[0.7, 0.5], [2.0, 0.6], [0.1, 0.4]];
        let t2 = array![[0.1, 0.3], [0.0, 0.2], [0.05, 0.1]];
        let targets = [t0, t1, t2].map(SourceTarget::from_projected);
        let shuffle = [2usize, 0, 1];
        let masks: Vec<Mask> = shuffle
            .iter()
            .enumerate()
            .map(|(s, &t)| Mask::new(&targets[t].projected / &r.frames, s))
            .collect();
        let perm = upit_permutation(&masks, &r, &targets).unwrap();
        assert_eq!(perm.mapping, shuffle.to_vec());
        let loss = upit_loss(&masks, &r, &targets, &perm).unwrap();
        assert!(loss.total < 1e-28);
        let g = upit_loss_gradient(&masks, &r, &targets, &perm).unwrap();
        assert!(g.iter().flatten().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn upit_single_frame_matches_pit() {
        let r = mag(array![[1.0, 2.0, 0.5]]);
        let targets = [
            SourceTarget::from_projected(array![[0.5, 0.1, 0.2]]),
            SourceTarget::from_projected(array![[0.1, 1.5, 0.3]]),
        ];
        let masks = vec![
            Mask::new(array![[0.1, 0.8, 0.5]], 0),
            Mask::new(array![[0.4, 0.1, 0.4]], 1),
        ];
        let upit = upit_permutation(&masks, &r, &targets).unwrap();
        let frames = frame_pit_losses(&masks, &r, &targets).unwrap();
        assert_eq!(upit.mapping, frames[0].1.mapping);
        let loss = upit_loss(&masks, &r, &targets, &upit).unwrap();
        assert!((loss.total - frames[0].0).abs() < 1e-15);
        assert_eq!(loss.per_frame.len(), 1);
        assert!((loss.normalized - loss.total / 6.0).abs() < 1e-18);
    }

    #[test]
    fn upit_loss_rejects_bad_permutation() {
        let r = mag(array![[1.0]]);
        let targets = [
            SourceTarget::from_projected(array![[0.5]]),
            SourceTarget::from_projected(array![[0.5]]),
        ];
        let masks = vec![Mask::new(array![[0.1]], 0), Mask::new(array![[0.1]], 1)];
        let bad = PermutationAssignment {
            mapping: vec![1, 1],
            scope: PermutationScope::Utterance,
        };
        assert!(matches!(
            upit_loss(&masks, &r, &targets, &bad),
            Err(Error::InvalidPermutation(_))
        ));
    }
}

//! Oracle masks and the phase-sensitive permutation-invariant losses.

mod loss;
mod permutation;

pub use loss::{
    frame_pit_losses, pairwise_costs, pit_frame_loss, psa_loss_frame, upit_loss,
    upit_loss_gradient, upit_permutation, FrameTarget, UpitLoss,
};
pub use permutation::{permutations, PermutationAssignment, PermutationScope, MAX_SOURCES};

use ndarray::{Array2, Zip};

use crate::dsp::{wrap_phase, MagnitudeSpectrogram, PhaseSpectrogram};
use crate::error::{Error, Result};

/// Relative floor below which a mixture bin counts as empty in mask division.
pub const MASK_EPSILON: f64 = 1e-8;

/// Clamp range for oracle masks used to synthesise audio.
pub const ORACLE_MASK_CLAMP: (f64, f64) = (0.0, 2.0);

/// Per-frame, per-bin real gains for one output source.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub frames: Array2<f64>,
    pub source_index: usize,
}

impl Mask {
    pub fn new(frames: Array2<f64>, source_index: usize) -> Self {
        Self {
            frames,
            source_index,
        }
    }

    pub fn filled(shape: (usize, usize), value: f64, source_index: usize) -> Self {
        Self::new(Array2::from_elem(shape, value), source_index)
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        Self::new(self.frames.mapv(|m| m.clamp(lo, hi)), self.source_index)
    }
}

/// Mixture-minus-source phase, radians in (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDifference {
    pub frames: Array2<f64>,
}

pub fn phase_difference(
    mixture_phase: &PhaseSpectrogram,
    source_phase: &PhaseSpectrogram,
) -> Result<PhaseDifference> {
    if mixture_phase.frames.dim() != source_phase.frames.dim() {
        return Err(Error::DimensionMismatch(format!(
            "phase grids {:?} vs {:?}",
            mixture_phase.frames.dim(),
            source_phase.frames.dim()
        )));
    }
    let mut frames = &mixture_phase.frames - &source_phase.frames;
    frames.mapv_inplace(wrap_phase);
    Ok(PhaseDifference { frames })
}

fn epsilon_floor(r: &MagnitudeSpectrogram) -> f64 {
    MASK_EPSILON * r.max_value()
}

/// Ideal phase-sensitive filter `a_s cos(phi) / r`, zero where `r` is at or below
/// the epsilon floor.
pub fn ipsf_mask(
    a_s: &MagnitudeSpectrogram,
    phi: &PhaseDifference,
    r: &MagnitudeSpectrogram,
) -> Result<Mask> {
    r.same_shape(&a_s.frames, "source vs mixture magnitude")?;
    r.same_shape(&phi.frames, "phase difference vs mixture magnitude")?;
    let eps = epsilon_floor(r);
    let mut out = Array2::zeros(r.frames.dim());
    Zip::from(&mut out)
        .and(&a_s.frames)
        .and(&phi.frames)
        .and(&r.frames)
        .for_each(|m, &a, &p, &rr| {
            if rr > eps {
                *m = a * p.cos() / rr;
            }
        });
    Ok(Mask::new(out, 0))
}

/// Ideal ratio mask `a_s / sum_j a_j`; comparison output only.
pub fn ideal_ratio_mask(sources: &[MagnitudeSpectrogram], index: usize) -> Result<Mask> {
    let target = sources
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("no source {index}")))?;
    let mut denom = Array2::<f64>::zeros(target.frames.dim());
    for s in sources {
        target.same_shape(&s.frames, "source magnitudes")?;
        denom += &s.frames;
    }
    let floor = MASK_EPSILON * denom.iter().fold(0.0f64, |m, &x| m.max(x));
    let mut out = Array2::zeros(target.frames.dim());
    Zip::from(&mut out)
        .and(&target.frames)
        .and(&denom)
        .for_each(|m, &a, &d| {
            if d > floor {
                *m = a / d;
            }
        });
    Ok(Mask::new(out, index))
}

/// Ideal amplitude mask `a_s / r`; comparison output only.
pub fn ideal_amplitude_mask(a_s: &MagnitudeSpectrogram, r: &MagnitudeSpectrogram) -> Result<Mask> {
    r.same_shape(&a_s.frames, "source vs mixture magnitude")?;
    let eps = epsilon_floor(r);
    let mut out = Array2::zeros(r.frames.dim());
    Zip::from(&mut out)
        .and(&a_s.frames)
        .and(&r.frames)
        .for_each(|m, &a, &rr| {
            if rr > eps {
                *m = a / rr;
            }
        });
    Ok(Mask::new(out, 0))
}

/// Training target for one source: its magnitude projected onto the mixture
/// phase, `a_s * cos(phi_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTarget {
    pub projected: Array2<f64>,
}

impl SourceTarget {
    pub fn new(a_s: &MagnitudeSpectrogram, phi: &PhaseDifference) -> Result<Self> {
        a_s.same_shape(&phi.frames, "phase difference vs source magnitude")?;
        let mut projected = phi.frames.mapv(f64::cos);
        projected *= &a_s.frames;
        Ok(Self { projected })
    }

    pub fn from_projected(projected: Array2<f64>) -> Self {
        Self { projected }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

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

    fn phase(frames: Array2<f64>) -> PhaseSpectrogram {
        PhaseSpectrogram {
            frames,
            config: StftConfig::default(),
            original_length: 0,
            sample_rate: 8000,
        }
    }

    #[test]
    fn phase_difference_identical_is_zero() {
        let p = phase(array![[0.3, -1.2], [2.0, PI]]);
        let d = phase_difference(&p, &p).unwrap();
        assert!(d.frames.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn phase_difference_wraps_to_pi() {
        let y = phase(array![[PI / 2.0]]);
        let s = phase(array![[-PI / 2.0]]);
        let d = phase_difference(&y, &s).unwrap();
        assert!((d.frames[[0, 0]] - PI).abs() < 1e-15);
        let d2 = phase_difference(&s, &y).unwrap();
        // -pi wraps to +pi
        assert!((d2.frames[[0, 0]] - PI).abs() < 1e-15);
    }

    #[test]
    fn phase_difference_dimension_mismatch() {
        let a = phase(Array2::zeros((2, 3)));
        let b = phase(Array2::zeros((3, 3)));
        assert!(matches!(
            phase_difference(&a, &b),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ipsf_direct_division() {
        let r = mag(array![[1.0, 2.0], [4.0, 1.0]]);
        let a = mag(array![[0.5, 2.0], [2.0, 1.0]]);
        let phi = PhaseDifference {
            frames: Array2::zeros((2, 2)),
        };
        let m = ipsf_mask(&a, &phi, &r).unwrap();
        assert_eq!(m.frames, array![[0.5, 1.0], [0.5, 1.0]]);
    }

    #[test]
    fn ipsf_orthogonal_phase_is_zero() {
        let r = mag(array![[3.0]]);
        let a = mag(array![[7.0]]);
        let phi = PhaseDifference {
            frames: array![[PI / 2.0]],
        };
        let m = ipsf_mask(&a, &phi, &r).unwrap();
        assert!(m.frames[[0, 0]].abs() < 1e-15);
    }

    #[test]
    fn ipsf_zero_below_floor() {
        let r = mag(array![[1.0, 1e-9, 0.0]]);
        let a = mag(array![[1.0, 1.0, 1.0]]);
        let phi = PhaseDifference {
            frames: Array2::zeros((1, 3)),
        };
        let m = ipsf_mask(&a, &phi, &r).unwrap();
        assert_eq!(m.frames, array![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn comparison_masks() {
        let a1 = mag(array![[1.0, 0.0]]);
        let a2 = mag(array![[3.0, 0.0]]);
        let irm = ideal_ratio_mask(&[a1.clone(), a2], 0).unwrap();
        assert_eq!(irm.frames, array![[0.25, 0.0]]);
        let r = mag(array![[2.0, 1.0]]);
        let iam = ideal_amplitude_mask(&a1, &r).unwrap();
        assert_eq!(iam.frames, array![[0.5, 0.0]]);
    }
}

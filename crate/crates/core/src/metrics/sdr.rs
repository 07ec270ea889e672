use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Length of the distortion filter the estimate may apply to the reference.
pub const SDR_FILTER_TAPS: usize = 512;

/// Bounds applied to every SDR value, so exact and empty estimates stay finite.
pub const SDR_CAP_DB: f64 = 100.0;

fn fft_real(x: &[f64], n: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

fn ifft_real(mut buf: Vec<Complex64>, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = buf.len();
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// A reference signal with its delayed-copy Gram matrix factorised, reusable
/// across many estimates.
pub struct SdrReference {
    samples: Vec<f64>,
    taps: usize,
    nfft: usize,
    spectrum: Vec<Complex64>,
    solver: Solver,
}

enum Solver {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Solver {
    fn new(gram: DMatrix<f64>) -> Result<Self> {
        if let Some(ch) = gram.clone().cholesky() {
            return Ok(Solver::Cholesky(ch));
        }
        let lu = gram.clone().lu();
        if lu.is_invertible() {
            return Ok(Solver::Lu(lu));
        }
        // rank-deficient reference (e.g. a pure tone): ridge by a relative epsilon
        let ridge = 1e-10 * gram.trace() / gram.nrows() as f64;
        let n = gram.nrows();
        (gram + DMatrix::identity(n, n) * ridge)
            .cholesky()
            .map(Solver::Cholesky)
            .ok_or_else(|| Error::DegenerateSignal("reference Gram matrix is singular".into()))
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Solver::Cholesky(c) => c.solve(b),
            Solver::Lu(l) => l.solve(b).expect("invertible by construction"),
        }
    }
}

impl SdrReference {
    pub fn new(reference: &Waveform, taps: usize) -> Result<Self> {
        reference.validate()?;
        if taps == 0 {
            return Err(Error::InvalidArgument("SDR filter needs at least one tap".into()));
        }
        if reference.energy() == 0.0 {
            return Err(Error::DegenerateSignal("silent SDR reference".into()));
        }
        let n = reference.len();
        let nfft = (n + taps).next_power_of_two();
        let mut planner = FftPlanner::new();
        let spectrum = fft_real(&reference.samples, nfft, &mut planner);
        let power: Vec<Complex64> = spectrum.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
        let acf = ifft_real(power, &mut planner);
        let gram = DMatrix::from_fn(taps, taps, |i, j| acf[i.abs_diff(j)]);
        Ok(Self {
            samples: reference.samples.clone(),
            taps,
            nfft,
            spectrum,
            solver: Solver::new(gram)?,
        })
    }

    /// Signal-to-distortion ratio of `estimate` in dB, within `±SDR_CAP_DB`.
    pub fn sdr(&self, estimate: &Waveform) -> Result<f64> {
        estimate.validate()?;
        let n = self.samples.len();
        if estimate.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "reference has {n} samples, estimate {}",
                estimate.len()
            )));
        }
        let mut planner = FftPlanner::new();
        let est = fft_real(&estimate.samples, self.nfft, &mut planner);
        let cross: Vec<Complex64> = self.spectrum.iter().zip(&est).map(|(x, y)| x.conj() * y).collect();
        let xcorr = ifft_real(cross, &mut planner);
        let d = DVector::from_column_slice(&xcorr[..self.taps]);
        let coeffs = self.solver.solve(&d);

        let c_spec = fft_real(coeffs.as_slice(), self.nfft, &mut planner);
        let prod: Vec<Complex64> = c_spec.iter().zip(&self.spectrum).map(|(c, x)| c * x).collect();
        let target = ifft_real(prod, &mut planner);
        let out_len = n + self.taps - 1;
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, &t) in target[..out_len].iter().enumerate() {
            let y = estimate.samples.get(k).copied().unwrap_or(0.0);
            num += t * t;
            den += (y - t) * (y - t);
        }
        Ok(ratio_db(num, den))
    }
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        return -SDR_CAP_DB;
    }
    if den == 0.0 {
        return SDR_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB)
}

/// SDR with the default 512-tap distortion filter.
pub fn sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    sdr_with_taps(reference, estimate, SDR_FILTER_TAPS)
}

pub fn sdr_with_taps(reference: &Waveform, estimate: &Waveform, taps: usize) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    SdrReference::new(reference, taps)?.sdr(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::white_noise;

    fn coloured(len: usize, seed: u64) -> Waveform {
        let w = white_noise(len, 1.0, 8000, seed);
        let mut y = vec![0.0; len];
        for n in 0..len {
            y[n] = w.samples[n] + if n > 0 { 0.6 * y[n - 1] } else { 0.0 };
        }
        Waveform::new(y, 8000)
    }

    /// Removes from `v` its least-squares fit by delayed copies of `x`,
    /// using an explicit delay matrix and QR. Only the first `n` rows matter
    /// because the estimate is zero beyond its length.
    fn orthogonalise(x: &[f64], v: &[f64], taps: usize) -> Vec<f64> {
        let n = x.len();
        let a = DMatrix::from_fn(n, taps, |r, c| if r >= c { x[r - c] } else { 0.0 });
        let b = DVector::from_column_slice(v);
        let qr = a.clone().qr();
        let coef = qr.r().solve_upper_triangular(&(qr.q().transpose() * &b)).unwrap();
        (b - a * coef).as_slice().to_vec()
    }

    #[test]
    fn exact_and_sign_flipped_estimates_hit_the_cap() {
        let x = coloured(4000, 1);
        assert_eq!(sdr(&x, &x).unwrap(), SDR_CAP_DB);
        assert!(sdr(&x, &x.scaled(-1.0)).unwrap() > 99.0);
    }

    #[test]
    fn filtered_reference_is_distortion_free() {
        // trailing silence keeps the whole filter response inside the signal
        let x = coloured(4000, 2).padded_to(4600);
        let h: Vec<f64> = (0..512).map(|k| 0.9f64.powi(k) * if k % 3 == 1 { -0.5 } else { 0.7 }).collect();
        let mut y = vec![0.0; x.len()];
        for n in 0..x.len() {
            for (k, c) in h.iter().enumerate() {
                if n >= k {
                    y[n] += c * x.samples[n - k];
                }
            }
        }
        let got = sdr(&x, &Waveform::new(y, 8000)).unwrap();
        assert!(got > SDR_CAP_DB - 0.1, "{got}");
    }

    #[test]
    fn orthogonal_noise_at_ten_db() {
        let taps = 64;
        let x = coloured(3000, 3);
        let v = white_noise(3000, 1.0, 8000, 4).samples;
        let e = orthogonalise(&x.samples, &v, taps);
        let pe: f64 = e.iter().map(|a| a * a).sum();
        let g = (x.energy() / pe / 10.0).sqrt();
        let y: Vec<f64> = x.samples.iter().zip(&e).map(|(a, b)| a + g * b).collect();
        let got = sdr_with_taps(&x, &Waveform::new(y, 8000), taps).unwrap();
        assert!((got - 10.0).abs() < 0.3, "{got}");
    }

    #[test]
    fn zero_estimate_is_floored_and_errors_are_reported() {
        let x = coloured(1000, 5);
        assert_eq!(sdr(&x, &Waveform::zeros(1000, 8000)).unwrap(), -SDR_CAP_DB);
        assert!(matches!(
            sdr(&Waveform::zeros(1000, 8000), &x),
            Err(Error::DegenerateSignal(_))
        ));
        assert!(matches!(
            sdr(&x, &Waveform::zeros(999, 8000)),
            Err(Error::DimensionMismatch(_))
        ));
    }
}

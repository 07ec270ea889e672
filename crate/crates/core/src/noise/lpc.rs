use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// All-pole model `gain / A(z)` with `A(z) = 1 - sum_k a_k z^-k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcModel {
    pub order: usize,
    /// Predictor coefficients `a_1 .. a_p`.
    pub coefficients: Vec<f64>,
    /// Prediction-error standard deviation.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Levinson {
    pub coefficients: Vec<f64>,
    pub reflection: Vec<f64>,
    /// Prediction-error power after the final order.
    pub error_power: f64,
}

/// Levinson-Durbin recursion on autocorrelation lags `r[0..=order]`.
///
/// Fails if any reflection coefficient reaches magnitude 1, which for a
/// genuine autocorrelation sequence only happens for degenerate input.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<Levinson> {
    if r.len() <= order {
        return Err(Error::InvalidArgument(format!(
            "need {} autocorrelation lags, got {}",
            order + 1,
            r.len()
        )));
    }
    if r[0] <= 0.0 {
        return Err(Error::DegenerateSignal(
            "zero autocorrelation at lag 0".into(),
        ));
    }
    let mut a = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    for m in 0..order {
        let acc: f64 = r[m + 1] - (0..m).map(|k| a[k] * r[m - k]).sum::<f64>();
        let k = acc / err;
        if !(k.abs() < 1.0) {
            return Err(Error::UnstableLpc(k));
        }
        let prev = a.clone();
        a[m] = k;
        for j in 0..m {
            a[j] = prev[j] - k * prev[m - 1 - j];
        }
        err *= 1.0 - k * k;
        reflection.push(k);
    }
    Ok(Levinson {
        coefficients: a,
        reflection,
        error_power: err,
    })
}

/// Biased autocorrelation `r[k] = (1/N) sum_n x[n] x[n+k]`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..=max_lag)
        .map(|k| {
            if k >= x.len() {
                return 0.0;
            }
            x[..x.len() - k]
                .iter()
                .zip(&x[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Autocorrelation-method LPC fit.
pub fn lpc_fit(w: &Waveform, order: usize) -> Result<LpcModel> {
    if order == 0 {
        return Err(Error::InvalidArgument("LPC order must be positive".into()));
    }
    if w.len() <= 10 * order {
        return Err(Error::SignalTooShort(format!(
            "{} samples for an order-{order} fit",
            w.len()
        )));
    }
    let r = autocorrelation(&w.samples, order);
    let fit = levinson_durbin(&r, order)?;
    Ok(LpcModel {
        order,
        coefficients: fit.coefficients,
        gain: fit.error_power.max(0.0).sqrt(),
    })
}

impl LpcModel {
    /// Filters `excitation` through `gain / A(z)` with zero initial state.
    pub fn synthesize(&self, excitation: &[f64]) -> Vec<f64> {
        let p = self.order;
        let mut y = vec![0.0; excitation.len()];
        for n in 0..excitation.len() {
            let mut acc = self.gain * excitation[n];
            for k in 1..=p.min(n) {
                acc += self.coefficients[k - 1] * y[n - k];
            }
            y[n] = acc;
        }
        y
    }

    /// Power spectral density `|gain / A(e^{jw})|^2` at normalised frequency
    /// `f` in cycles per sample.
    pub fn envelope(&self, f: f64) -> f64 {
        let mut a = Complex64::new(1.0, 0.0);
        for (k, c) in self.coefficients.iter().enumerate() {
            a -= Complex64::from_polar(*c, -2.0 * PI * f * (k + 1) as f64);
        }
        self.gain * self.gain / a.norm_sqr()
    }
}

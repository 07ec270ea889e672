use std::f64::consts::PI;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Kaiser shape parameter giving roughly 60 dB of stopband attenuation.
pub const KAISER_BETA: f64 = 5.65;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Kaiser-windowed sinc lowpass for resampling by `up / down`, with gain `up`
/// and `2 * 10 * max(up, down) + 1` taps.
pub fn design_filter(up: usize, down: usize) -> Vec<f64> {
    let max = up.max(down);
    let half = 10 * max;
    let len = 2 * half + 1;
    let cutoff = 1.0 / max as f64;
    let denom = bessel_i0(KAISER_BETA);
    (0..len)
        .map(|i| {
            let t = i as f64 - half as f64;
            let sinc = if t == 0.0 {
                1.0
            } else {
                (PI * cutoff * t).sin() / (PI * cutoff * t)
            };
            let r = t / half as f64;
            let win = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / denom;
            cutoff * sinc * win * up as f64
        })
        .collect()
}

/// Polyphase rational resampling to `target_rate`, delay compensated so that
/// output sample `m` aligns with time `m / target_rate`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    w.validate()?;
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let g = gcd(w.sample_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (w.sample_rate as u64 / g) as usize;
    let h = design_filter(up, down);
    let half = (h.len() - 1) / 2;
    let n_in = w.len();
    let n_out = (n_in * up).div_ceil(down);
    let x = &w.samples;
    let out = (0..n_out)
        .map(|m| {
            // y[m] = sum_n x[n] h[m * down - n * up + half]
            let pos = m * down + half;
            let n_hi = (pos / up).min(n_in - 1);
            let n_lo = pos.saturating_sub(h.len() - 1).div_ceil(up);
            (n_lo..=n_hi)
                .map(|n| x[n] * h[pos - n * up])
                .sum::<f64>()
        })
        .collect();
    Ok(Waveform::new(out, target_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-10);
    }

    #[test]
    fn stopband_is_at_least_sixty_db_down() {
        for (up, down) in [(5, 4), (4, 5)] {
            let h = design_filter(up, down);
            let max = up.max(down) as f64;
            let response = |f: f64| {
                let (mut re, mut im) = (0.0, 0.0);
                for (k, c) in h.iter().enumerate() {
                    re += c * (2.0 * PI * f * k as f64).cos();
                    im -= c * (2.0 * PI * f * k as f64).sin();
                }
                (re * re + im * im).sqrt()
            };
            let dc = response(0.0);
            assert!((dc - up as f64).abs() < 1e-2 * up as f64, "{dc}");
            // cutoff at 1 / (2 max) cycles/sample; transition about 1.4 / taps wide
            let edge = 1.0 / (2.0 * max) + 3.6 / h.len() as f64;
            let mut f = edge;
            while f < 0.5 {
                let db = 20.0 * (response(f) / dc).log10();
                assert!(db < -60.0, "{up}/{down} at {f}: {db}");
                f += 0.001;
            }
        }
    }

    #[test]
    fn tone_survives_rate_change() {
        let fs = 8000.0;
        let x: Vec<f64> = (0..8000).map(|n| (2.0 * PI * 440.0 * n as f64 / fs).sin()).collect();
        let y = resample(&Waveform::new(x, 8000), 10_000).unwrap();
        assert_eq!(y.len(), 10_000);
        for m in 500..9500 {
            let expected = (2.0 * PI * 440.0 * m as f64 / 10_000.0).sin();
            assert!((y.samples[m] - expected).abs() < 2e-3, "{m}");
        }
        let back = resample(&y, 8000).unwrap();
        assert_eq!(back.len(), 8000);
    }
}

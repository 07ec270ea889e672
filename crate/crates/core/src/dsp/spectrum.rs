use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Waveform;

/// Welch-averaged periodogram with a periodic Hann window and 50% overlap.
///
/// Bin `k` covers frequency `k * fs / segment_len`. The scaling is such that
/// white noise of variance `s2` yields an expected value of `s2` in every bin.
pub fn welch_psd(w: &Waveform, segment_len: usize) -> Vec<f64> {
    let window: Vec<f64> = (0..segment_len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment_len as f64).cos())
        .collect();
    let norm: f64 = window.iter().map(|v| v * v).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let hop = segment_len / 2;
    let mut acc = vec![0.0; segment_len / 2 + 1];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut start = 0;
    while start + segment_len <= w.len() {
        for (b, (x, wn)) in buf
            .iter_mut()
            .zip(w.samples[start..start + segment_len].iter().zip(&window))
        {
            *b = Complex64::new(x * wn, 0.0);
        }
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let scale = 1.0 / (norm * count.max(1) as f64);
    acc.iter().map(|a| a * scale).collect()
}

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::resample::resample;
use crate::dsp::Waveform;
use crate::error::{Error, Result};

pub const ESTOI_SAMPLE_RATE: u32 = 10_000;
pub const ESTOI_FRAME_LEN: usize = 256;
pub const ESTOI_FFT_SIZE: usize = 512;
pub const ESTOI_NUM_BANDS: usize = 15;
pub const ESTOI_MIN_FREQ: f64 = 150.0;
/// Frames per short-time segment (384 ms).
pub const ESTOI_SEGMENT: usize = 30;
/// Frames more than this many dB below the loudest clean frame are dropped.
pub const ESTOI_DYN_RANGE_DB: f64 = 40.0;

const EPS: f64 = f64::EPSILON;

/// `hanning(n + 2)` without its zero end points.
fn inner_hann(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n + 1) as f64).cos())
        .collect()
}

/// One-third octave band matrix (`bands x (nfft/2 + 1)`), band edges snapped
/// to the nearest FFT bin.
pub fn third_octave_bands(fs: f64, nfft: usize, num_bands: usize, min_freq: f64) -> Vec<Vec<f64>> {
    let nbins = nfft / 2 + 1;
    let f: Vec<f64> = (0..nbins).map(|k| k as f64 * fs / nfft as f64).collect();
    let nearest = |target: f64| {
        let mut best = 0;
        for (i, &fi) in f.iter().enumerate() {
            if (fi - target).powi(2) < (f[best] - target).powi(2) {
                best = i;
            }
        }
        best
    };
    (0..num_bands)
        .map(|i| {
            let k = i as f64;
            let lo = nearest(min_freq * 2f64.powf((2.0 * k - 1.0) / 6.0));
            let hi = nearest(min_freq * 2f64.powf((2.0 * k + 1.0) / 6.0));
            (0..nbins).map(|b| if (lo..hi).contains(&b) { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    // strictly fewer than len - frame, mirroring range(0, len - frame, hop)
    (0..len.saturating_sub(frame)).step_by(hop)
}

/// Drops frames whose clean energy is more than `dyn_range` dB below the
/// loudest one and overlap-adds the remaining windowed frames.
pub fn remove_silent_frames(x: &[f64], y: &[f64], dyn_range: f64, frame: usize, hop: usize) -> (Vec<f64>, Vec<f64>) {
    let w = inner_hann(frame);
    let starts: Vec<usize> = frame_starts(x.len(), frame, hop).collect();
    let windowed = |s: &[f64], st: usize| -> Vec<f64> { s[st..st + frame].iter().zip(&w).map(|(a, b)| a * b).collect() };
    let energies: Vec<f64> = starts
        .iter()
        .map(|&st| {
            let f = windowed(x, st);
            20.0 * (f.iter().map(|v| v * v).sum::<f64>().sqrt() + EPS).log10()
        })
        .collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - dyn_range - e < 0.0)
        .map(|(&st, _)| st)
        .collect();
    let out_len = if kept.is_empty() { 0 } else { (kept.len() - 1) * hop + frame };
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (i, &st) in kept.iter().enumerate() {
        for (j, (a, b)) in windowed(x, st).iter().zip(windowed(y, st)).enumerate() {
            xs[i * hop + j] += a;
            ys[i * hop + j] += b;
        }
    }
    (xs, ys)
}

/// Third-octave band envelopes, `bands x frames`.
fn band_envelopes(x: &[f64], obm: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = inner_hann(ESTOI_FRAME_LEN);
    let fft = FftPlanner::new().plan_fft_forward(ESTOI_FFT_SIZE);
    let nbins = ESTOI_FFT_SIZE / 2 + 1;
    let mut out = vec![Vec::new(); obm.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); ESTOI_FFT_SIZE];
    for st in frame_starts(x.len(), ESTOI_FRAME_LEN, ESTOI_FRAME_LEN / 2) {
        buf.fill(Complex64::new(0.0, 0.0));
        for (b, (v, wn)) in buf.iter_mut().zip(x[st..st + ESTOI_FRAME_LEN].iter().zip(&w)) {
            b.re = v * wn;
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..nbins].iter().map(|z| z.norm_sqr()).collect();
        for (band, row) in obm.iter().zip(out.iter_mut()) {
            row.push(band.iter().zip(&power).map(|(m, p)| m * p).sum::<f64>().sqrt());
        }
    }
    out
}

/// Normalises each row of a `bands x N` segment to zero mean and unit norm,
/// then each column likewise.
fn row_col_normalize(seg: &mut [Vec<f64>]) {
    for row in seg.iter_mut() {
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= mean);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt() + EPS;
        row.iter_mut().for_each(|v| *v /= norm);
    }
    let n = seg[0].len();
    let j = seg.len() as f64;
    for c in 0..n {
        let mean = seg.iter().map(|r| r[c]).sum::<f64>() / j;
        seg.iter_mut().for_each(|r| r[c] -= mean);
        let norm = seg.iter().map(|r| r[c] * r[c]).sum::<f64>().sqrt() + EPS;
        seg.iter_mut().for_each(|r| r[c] /= norm);
    }
}

/// Extended short-time objective intelligibility of `processed` against
/// `clean`.
pub fn estoi(clean: &Waveform, processed: &Waveform) -> Result<f64> {
    clean.validate()?;
    processed.validate()?;
    if clean.len() != processed.len() || clean.sample_rate != processed.sample_rate {
        return Err(Error::DimensionMismatch(format!(
            "clean {} samples @ {} Hz vs processed {} @ {} Hz",
            clean.len(),
            clean.sample_rate,
            processed.len(),
            processed.sample_rate
        )));
    }
    let x = resample(clean, ESTOI_SAMPLE_RATE)?;
    let y = resample(processed, ESTOI_SAMPLE_RATE)?;
    let (x, y) = remove_silent_frames(&x.samples, &y.samples, ESTOI_DYN_RANGE_DB, ESTOI_FRAME_LEN, ESTOI_FRAME_LEN / 2);
    let obm = third_octave_bands(ESTOI_SAMPLE_RATE as f64, ESTOI_FFT_SIZE, ESTOI_NUM_BANDS, ESTOI_MIN_FREQ);
    let xb = band_envelopes(&x, &obm);
    let yb = band_envelopes(&y, &obm);
    let frames = xb[0].len();
    if frames < ESTOI_SEGMENT {
        return Err(Error::SignalTooShort(format!(
            "{frames} frames remain after silence removal, ESTOI needs {ESTOI_SEGMENT}"
        )));
    }
    let segments = frames - ESTOI_SEGMENT + 1;
    let mut total = 0.0;
    for m in 0..segments {
        let mut xs: Vec<Vec<f64>> = xb.iter().map(|r| r[m..m + ESTOI_SEGMENT].to_vec()).collect();
        let mut ys: Vec<Vec<f64>> = yb.iter().map(|r| r[m..m + ESTOI_SEGMENT].to_vec()).collect();
        row_col_normalize(&mut xs);
        row_col_normalize(&mut ys);
        let dot: f64 = xs.iter().zip(&ys).flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q)).sum();
        total += dot / ESTOI_SEGMENT as f64;
    }
    Ok(total / segments as f64)
}

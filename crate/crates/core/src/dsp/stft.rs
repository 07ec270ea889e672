use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

/// Analysis/synthesis window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Raised cosine without zero end points, `0.5 * (1 - cos(2 pi (n + 1) / (N + 1)))`.
    Hanning,
    /// Symmetric Hamming window.
    Hamming,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hanning => (0..len)
                .map(|n| 0.5 * (1.0 - (2.0 * PI * (n + 1) as f64 / (len + 1) as f64).cos()))
                .collect(),
            Window::Hamming => {
                if len == 1 {
                    return vec![1.0];
                }
                (0..len)
                    .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_length: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    /// 256-point FFT, 32 ms window and 16 ms shift at 8 kHz.
    fn default() -> Self {
        Self {
            fft_size: 256,
            window_length: 256,
            hop: 128,
            window: Window::Hanning,
        }
    }
}

impl StftConfig {
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.window_length == 0 || self.fft_size == 0 {
            return Err(Error::InvalidStftConfig("sizes must be positive".into()));
        }
        if self.fft_size % 2 != 0 {
            return Err(Error::InvalidStftConfig(format!(
                "fft_size {} must be even",
                self.fft_size
            )));
        }
        if !(self.hop <= self.window_length && self.window_length <= self.fft_size) {
            return Err(Error::InvalidStftConfig(format!(
                "need hop <= window_length <= fft_size, got {} / {} / {}",
                self.hop, self.window_length, self.fft_size
            )));
        }
        // Overlap-add normalisation divides by the summed squared window, which is
        // strictly positive everywhere iff the window has no zeros and hop <= length.
        if self
            .window
            .coefficients(self.window_length)
            .iter()
            .any(|&w| w <= 0.0)
        {
            return Err(Error::InvalidStftConfig(
                "window has zero taps; overlap-add cannot be inverted".into(),
            ));
        }
        Ok(())
    }

    /// Number of frames for a signal of `len` samples, tail zero-padded.
    pub fn num_frames(&self, len: usize) -> usize {
        if len <= self.window_length {
            1
        } else {
            1 + (len - self.window_length).div_ceil(self.hop)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    /// K frames by `fft_size / 2 + 1` bins.
    pub frames: Array2<Complex64>,
    pub config: StftConfig,
    pub original_length: usize,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub frames: Array2<f64>,
    pub config: StftConfig,
    pub original_length: usize,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpectrogram {
    /// Radians in (-pi, pi].
    pub frames: Array2<f64>,
    pub config: StftConfig,
    pub original_length: usize,
    pub sample_rate: u32,
}

/// Phase of a complex value in (-pi, pi]; exactly-zero values have phase 0.
pub fn phase_of(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let p = z.im.atan2(z.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut y = x - two_pi * ((x + PI) / two_pi).floor();
    // y is now in [-pi, pi)
    if y <= -PI {
        y += two_pi;
    }
    y
}

impl ComplexSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn magnitude(&self) -> MagnitudeSpectrogram {
        MagnitudeSpectrogram {
            frames: self.frames.mapv(|z| z.norm()),
            config: self.config,
            original_length: self.original_length,
            sample_rate: self.sample_rate,
        }
    }

    pub fn phase(&self) -> PhaseSpectrogram {
        PhaseSpectrogram {
            frames: self.frames.mapv(phase_of),
            config: self.config,
            original_length: self.original_length,
            sample_rate: self.sample_rate,
        }
    }
}

impl MagnitudeSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn max_value(&self) -> f64 {
        self.frames.iter().fold(0.0, |m, &x| m.max(x))
    }

    pub(crate) fn same_shape(&self, other: &Array2<f64>, what: &str) -> Result<()> {
        if self.frames.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.frames.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Short-time Fourier transform with single-sided output.
///
/// Frame `i` (0-based) covers samples `[i * hop, i * hop + window_length)`; the
/// signal is zero-padded at the tail so that every sample lies in some frame.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if w.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    cfg.validate()?;
    let window = cfg.window.coefficients(cfg.window_length);
    let n_frames = cfg.num_frames(w.len());
    let n_bins = cfg.num_bins();
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);

    let mut frames = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for (i, mut row) in frames.rows_mut().into_iter().enumerate() {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        let start = i * cfg.hop;
        for (n, &wn) in window.iter().enumerate() {
            if let Some(&x) = w.samples.get(start + n) {
                buf[n] = Complex64::new(x * wn, 0.0);
            }
        }
        fft.process(&mut buf);
        for (dst, src) in row.iter_mut().zip(&buf[..n_bins]) {
            *dst = *src;
        }
    }
    Ok(ComplexSpectrogram {
        frames,
        config: *cfg,
        original_length: w.len(),
        sample_rate: w.sample_rate,
    })
}

/// Zeros added on each side by [`stft_edge_padded`].
pub fn edge_padding(cfg: &StftConfig) -> usize {
    cfg.window_length.saturating_sub(cfg.hop)
}

/// STFT of `w` extended by [`edge_padding`] zeros on both sides.
///
/// Every sample of `w` then lies under at least two frames, so resynthesis
/// from a modified spectrogram never divides by a near-zero window sum at the
/// signal edges.
pub fn stft_edge_padded(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if w.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    cfg.validate()?;
    let pad = edge_padding(cfg);
    let mut samples = vec![0.0; w.len() + 2 * pad];
    samples[pad..pad + w.len()].copy_from_slice(&w.samples);
    stft(&Waveform::new(samples, w.sample_rate), cfg)
}

/// Inverse of [`stft_edge_padded`]: overlap-add, then drop the padding.
pub fn inverse_stft_edge_padded(
    mag: &MagnitudeSpectrogram,
    phase: &PhaseSpectrogram,
) -> Result<Waveform> {
    let pad = edge_padding(&mag.config);
    if mag.original_length <= 2 * pad {
        return Err(Error::DimensionMismatch(format!(
            "{} samples cannot hold {pad} samples of padding on each side",
            mag.original_length
        )));
    }
    let mut w = inverse_stft(mag, phase)?;
    w.samples.truncate(mag.original_length - pad);
    w.samples.drain(..pad);
    Ok(w)
}

/// Overlap-add inverse STFT from a magnitude and a phase spectrogram.
///
/// The overlap-added signal is divided by the accumulated squared window, so
/// `inverse_stft(|stft(w)|, angle(stft(w)))` reproduces `w`.
pub fn inverse_stft(
    mag: &MagnitudeSpectrogram,
    phase: &PhaseSpectrogram,
) -> Result<Waveform> {
    if mag.frames.dim() != phase.frames.dim() || mag.config != phase.config {
        return Err(Error::DimensionMismatch(format!(
            "magnitude {:?} vs phase {:?}",
            mag.frames.dim(),
            phase.frames.dim()
        )));
    }
    let cfg = mag.config;
    cfg.validate()?;
    if mag.num_bins() != cfg.num_bins() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} bins, got {}",
            cfg.num_bins(),
            mag.num_bins()
        )));
    }
    let mut spec = Array2::<Complex64>::zeros(mag.frames.dim());
    Zip::from(&mut spec)
        .and(&mag.frames)
        .and(&phase.frames)
        .for_each(|z, &m, &p| *z = Complex64::from_polar(m, p));
    overlap_add(&spec, &cfg, mag.original_length, mag.sample_rate)
}

/// Overlap-add inverse of a complex single-sided spectrogram.
pub fn inverse_stft_complex(spec: &ComplexSpectrogram) -> Result<Waveform> {
    spec.config.validate()?;
    overlap_add(
        &spec.frames,
        &spec.config,
        spec.original_length,
        spec.sample_rate,
    )
}

fn overlap_add(
    spec: &Array2<Complex64>,
    cfg: &StftConfig,
    original_length: usize,
    sample_rate: u32,
) -> Result<Waveform> {
    let n_frames = spec.nrows();
    let n_bins = cfg.num_bins();
    let window = cfg.window.coefficients(cfg.window_length);
    let ifft = FftPlanner::new().plan_fft_inverse(cfg.fft_size);
    let total = (n_frames - 1) * cfg.hop + cfg.window_length;
    let mut out = vec![0.0; total.max(original_length)];
    let mut norm = vec![0.0; out.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let scale = 1.0 / cfg.fft_size as f64;

    for (i, row) in spec.rows().into_iter().enumerate() {
        for (k, z) in row.iter().enumerate() {
            buf[k] = *z;
        }
        // DC and Nyquist bins of a real signal are real.
        buf[0].im = 0.0;
        buf[n_bins - 1].im = 0.0;
        for k in 1..n_bins - 1 {
            buf[cfg.fft_size - k] = buf[k].conj();
        }
        ifft.process(&mut buf);
        let start = i * cfg.hop;
        for (n, &wn) in window.iter().enumerate() {
            out[start + n] += buf[n].re * scale * wn;
            norm[start + n] += wn * wn;
        }
    }
    out.truncate(original_length);
    for (o, &d) in out.iter_mut().zip(&norm) {
        if d > 0.0 {
            *o /= d;
        }
    }
    Ok(Waveform::new(out, sample_rate))
}

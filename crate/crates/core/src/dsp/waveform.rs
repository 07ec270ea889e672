use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono audio in double precision with nominal amplitude range [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Checks the invariants every consuming operation relies on.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(())
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    /// Mean of squared samples (average power).
    pub fn mean_square(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
        )
    }

    /// Zero-pads at the tail up to `len`; never truncates.
    pub fn padded_to(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        if samples.len() < len {
            samples.resize(len, 0.0);
        }
        Self::new(samples, self.sample_rate)
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self::new(self.samples[start..end].to_vec(), self.sample_rate)
    }

    /// Sample-wise sum; all inputs must share length and sample rate.
    pub fn sum(parts: &[&Waveform]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to sum".into()))?;
        let mut out = vec![0.0; first.len()];
        for p in parts {
            if p.len() != first.len() || p.sample_rate != first.sample_rate {
                return Err(Error::DimensionMismatch(format!(
                    "cannot sum waveforms of length {} @ {} Hz and {} @ {} Hz",
                    first.len(),
                    first.sample_rate,
                    p.len(),
                    p.sample_rate
                )));
            }
            for (o, x) in out.iter_mut().zip(&p.samples) {
                *o += x;
            }
        }
        Ok(Self::new(out, first.sample_rate))
    }
}

use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" | "tr" => Ok(Split::Train),
            "validation" | "valid" | "cv" | "dev" => Ok(Split::Validation),
            "test" | "tt" | "eval" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Sample boundaries of the three contiguous noise segments:
/// `[0, validation_start)`, `[validation_start, test_start)`, `[test_start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionBounds {
    pub validation_start: usize,
    pub test_start: usize,
    pub end: usize,
}

impl PartitionBounds {
    pub fn range(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..self.validation_start,
            Split::Validation => self.validation_start..self.test_start,
            Split::Test => self.test_start..self.end,
        }
    }

    /// Boundaries for `len` samples split by the given ratios.
    pub fn from_ratios(len: usize, ratios: (f64, f64, f64)) -> Result<Self> {
        let (a, b, c) = ratios;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "partition ratios must be positive, got {ratios:?}"
            )));
        }
        let total = a + b + c;
        let validation_start = (len as f64 * a / total).round() as usize;
        let test_start = (len as f64 * (a + b) / total).round() as usize;
        if validation_start == 0 || test_start <= validation_start || len <= test_start {
            return Err(Error::SignalTooShort(format!(
                "{len} samples cannot be split {ratios:?} into non-empty segments"
            )));
        }
        Ok(Self {
            validation_start,
            test_start,
            end: len,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePartition {
    pub train: Waveform,
    pub validation: Waveform,
    pub test: Waveform,
    pub bounds: PartitionBounds,
}

impl NoisePartition {
    pub fn get(&self, split: Split) -> &Waveform {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Splits a noise signal into contiguous train, validation and test segments.
pub fn partition_noise(w: &Waveform, ratios: (f64, f64, f64)) -> Result<NoisePartition> {
    let bounds = PartitionBounds::from_ratios(w.len(), ratios)?;
    let seg = |s: Split| {
        let r = bounds.range(s);
        w.slice(r.start, r.end)
    };
    Ok(NoisePartition {
        train: seg(Split::Train),
        validation: seg(Split::Validation),
        test: seg(Split::Test),
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_minutes_at_full_scale_ratios() {
        let fs = 8000usize;
        let bounds = PartitionBounds::from_ratios(50 * 60 * fs, (40.0, 5.0, 5.0)).unwrap();
        assert_eq!(bounds.validation_start, 40 * 60 * fs);
        assert_eq!(bounds.test_start, 45 * 60 * fs);
    }

    #[test]
    fn desk_ratios_and_slicing_identity() {
        let w = Waveform::new((0..80_000).map(|n| (n as f64).sin()).collect(), 8000);
        let p = partition_noise(&w, (8.0, 1.0, 1.0)).unwrap();
        assert_eq!(p.train.len(), 64_000);
        assert_eq!(p.validation.len(), 8_000);
        assert_eq!(p.test.len(), 8_000);
        let joined: Vec<f64> = [&p.train, &p.validation, &p.test]
            .iter()
            .flat_map(|s| s.samples.iter().copied())
            .collect();
        assert_eq!(joined, w.samples);
    }

    #[test]
    fn too_short() {
        let w = Waveform::zeros(5, 8000);
        assert!(matches!(
            partition_noise(&w, (8.0, 1.0, 1.0)),
            Err(Error::SignalTooShort(_))
        ));
    }
}

//! Python bindings for upit.
//!
//! Signals cross the boundary as lists of floats and spectrograms as lists of
//! frames, so the module needs nothing beyond the standard interpreter.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use upit::dsp::{self, MagnitudeSpectrogram, PhaseSpectrogram, StftConfig, Waveform};
use upit::masks::{self, Mask, SourceTarget};
use upit::model::{self, BlstmNetwork};

fn to_py(e: upit::Error) -> PyErr {
    match e {
        upit::Error::MissingInput(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn grid(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let k = rows.len();
    let f = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != f) {
        return Err(PyValueError::new_err(format!("{what}: frames have unequal lengths")));
    }
    Array2::from_shape_vec((k, f), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Magnitude and phase (frames x 129) of the default 256/256/128 Hann STFT.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = 8000))]
fn stft(samples: Vec<f64>, sample_rate: u32) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let spec = dsp::stft(&Waveform::new(samples, sample_rate), &StftConfig::default()).map_err(to_py)?;
    Ok((rows(&spec.magnitude().frames), rows(&spec.phase().frames)))
}

/// Overlap-add resynthesis of `length` samples from magnitude and phase.
#[pyfunction]
#[pyo3(signature = (magnitude, phase, length, sample_rate = 8000))]
fn istft(
    magnitude: Vec<Vec<f64>>,
    phase: Vec<Vec<f64>>,
    length: usize,
    sample_rate: u32,
) -> PyResult<Vec<f64>> {
    let config = StftConfig::default();
    let mag = MagnitudeSpectrogram {
        frames: grid(magnitude, "magnitude")?,
        config,
        original_length: length,
        sample_rate,
    };
    let ph = PhaseSpectrogram {
        frames: grid(phase, "phase")?,
        config,
        original_length: length,
        sample_rate,
    };
    Ok(dsp::inverse_stft(&mag, &ph).map_err(to_py)?.samples)
}

/// Active speech level in dB relative to a unit-RMS signal.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = 8000))]
fn active_speech_level(samples: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
    upit::levels::active_speech_level(&Waveform::new(samples, sample_rate)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (reference, estimate, sample_rate = 8000))]
fn sdr(reference: Vec<f64>, estimate: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
    upit::metrics::sdr(&Waveform::new(reference, sample_rate), &Waveform::new(estimate, sample_rate)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (clean, processed, sample_rate = 8000))]
fn estoi(clean: Vec<f64>, processed: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
    upit::metrics::estoi(&Waveform::new(clean, sample_rate), &Waveform::new(processed, sample_rate)).map_err(to_py)
}

/// Utterance-level assignment of masks to targets.
///
/// `targets` are phase-projected magnitudes |S|cos(phi). Returns the mapping
/// (mask s serves target mapping[s]) and the summed loss under it.
#[pyfunction]
fn upit_permutation(
    masks: Vec<Vec<Vec<f64>>>,
    mixture_magnitude: Vec<Vec<f64>>,
    targets: Vec<Vec<Vec<f64>>>,
) -> PyResult<(Vec<usize>, f64)> {
    let masks = masks
        .into_iter()
        .enumerate()
        .map(|(j, m)| Ok(Mask::new(grid(m, "mask")?, j)))
        .collect::<PyResult<Vec<_>>>()?;
    let targets = targets
        .into_iter()
        .map(|t| Ok(SourceTarget::from_projected(grid(t, "target")?)))
        .collect::<PyResult<Vec<_>>>()?;
    let r = MagnitudeSpectrogram {
        frames: grid(mixture_magnitude, "mixture magnitude")?,
        config: StftConfig::default(),
        original_length: 0,
        sample_rate: 8000,
    };
    let perm = masks::upit_permutation(&masks, &r, &targets).map_err(to_py)?;
    let loss = masks::upit_loss(&masks, &r, &targets, &perm).map_err(to_py)?;
    Ok((perm.mapping, loss.total))
}

/// A trained mask estimator loaded from a checkpoint.
#[pyclass]
struct Separator {
    network: BlstmNetwork,
    stft: StftConfig,
}

#[pymethods]
impl Separator {
    #[new]
    fn new(checkpoint: PathBuf) -> PyResult<Self> {
        let ckpt = model::load_checkpoint(&checkpoint).map_err(to_py)?;
        Ok(Self {
            network: ckpt.network,
            stft: ckpt.stft,
        })
    }

    #[getter]
    fn num_outputs(&self) -> usize {
        self.network.config().output_sources
    }

    /// One estimated source per network output, each as long as the input.
    #[pyo3(signature = (mixture, sample_rate = 8000))]
    fn separate(&self, py: Python<'_>, mixture: Vec<f64>, sample_rate: u32) -> PyResult<Vec<Vec<f64>>> {
        let w = Waveform::new(mixture, sample_rate);
        let out = py
            .detach(|| model::separate(&self.network, &w, &self.stft))
            .map_err(to_py)?;
        Ok(out.into_iter().map(|w| w.samples).collect())
    }
}

#[pymodule]
fn upit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(istft, m)?)?;
    m.add_function(wrap_pyfunction!(active_speech_level, m)?)?;
    m.add_function(wrap_pyfunction!(sdr, m)?)?;
    m.add_function(wrap_pyfunction!(estoi, m)?)?;
    m.add_function(wrap_pyfunction!(upit_permutation, m)?)?;
    m.add_class::<Separator>()?;
    Ok(())
}

//! Time-frequency analysis and resynthesis.

mod spectrum;
mod stft;
mod waveform;

pub use stft::{
    edge_padding, inverse_stft, inverse_stft_complex, inverse_stft_edge_padded, phase_of, stft,
    stft_edge_padded, wrap_phase, ComplexSpectrogram, MagnitudeSpectrogram, PhaseSpectrogram,
    StftConfig, Window,
};
pub use spectrum::welch_psd;
pub use waveform::Waveform;

use crate::error::Result;
use crate::masks::Mask;

/// Hadamard product of a mask with a magnitude spectrogram.
///
/// Negative mask entries are clamped to zero first, so the result is a valid
/// magnitude spectrogram for any real mask.
pub fn apply_mask(mask: &Mask, r: &MagnitudeSpectrogram) -> Result<MagnitudeSpectrogram> {
    r.same_shape(&mask.frames, "mask vs magnitude")?;
    let mut frames = mask.frames.mapv(|m| m.max(0.0));
    frames *= &r.frames;
    Ok(MagnitudeSpectrogram {
        frames,
        config: r.config,
        original_length: r.original_length,
        sample_rate: r.sample_rate,
    })
}

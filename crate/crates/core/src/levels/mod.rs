//! Speech level measurement and mixture construction.

mod mixing;
mod p56;

pub use mixing::{
    add_noise_at_snr, add_silent_speaker, mix_speakers, noise_gain_for_snr, white_noise,
    MixtureExample, MixtureRecipe, SpeakerMix, SILENT_SPEAKER_GAP_DB, SNR_SANITY_RANGE_DB,
};
pub use p56::{active_speech_level, measure_speech_level, P56Params, SpeechLevel};

use crate::dsp::{apply_mask, inverse_stft_edge_padded, stft_edge_padded, ComplexSpectrogram, StftConfig, Waveform};
use crate::error::Result;
use crate::masks::Mask;

use super::network::BlstmNetwork;

/// Masks the mixture magnitude and inverts each estimate with the mixture
/// phase. `mixture` comes from [`stft_edge_padded`].
pub fn resynthesize(masks: &[Mask], mixture: &ComplexSpectrogram) -> Result<Vec<Waveform>> {
    let r = mixture.magnitude();
    let phase = mixture.phase();
    masks
        .iter()
        .map(|m| inverse_stft_edge_padded(&apply_mask(m, &r)?, &phase))
        .collect()
}

/// Separated waveforms together with the masks that produced them.
pub fn separate_with_masks(
    net: &BlstmNetwork,
    mixture: &Waveform,
    cfg: &StftConfig,
) -> Result<(Vec<Waveform>, Vec<Mask>)> {
    let spec = stft_edge_padded(mixture, cfg)?;
    let masks = net.infer(&spec.magnitude().frames)?;
    Ok((resynthesize(&masks, &spec)?, masks))
}

/// One waveform per network output, each as long as `mixture`.
pub fn separate(net: &BlstmNetwork, mixture: &Waveform, cfg: &StftConfig) -> Result<Vec<Waveform>> {
    Ok(separate_with_masks(net, mixture, cfg)?.0)
}

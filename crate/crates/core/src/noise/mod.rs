//! Synthetic noise (speech-shaped and babble) and noise partitioning.

mod lpc;
mod partition;
mod synth;

pub use lpc::{autocorrelation, levinson_durbin, lpc_fit, Levinson, LpcModel};
pub use partition::{partition_noise, NoisePartition, PartitionBounds, Split};
pub use synth::{babble_groups, gen_bbl, gen_ssn, SpeechShapedNoise, SSN_LPC_ORDER};

//! Bi-directional LSTM mask estimator, its trainer and checkpoints.

mod checkpoint;
mod config;
mod network;
mod separate;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{BlstmConfig, Direction, LstmBlocks, ParamBlock, ParamLayout};
pub use network::{dropout_mask, BlstmNetwork, FeatureNorm, ForwardCache, FORGET_BIAS_INIT, INIT_RANGE};
pub use separate::{resynthesize, separate, separate_with_masks};
pub use train::{
    evaluate_loss, train, utterance_loss, EpochRecord, StopReason, TrainHistory, TrainSchedule,
    TrainingUtterance,
};

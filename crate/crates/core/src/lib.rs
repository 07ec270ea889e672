pub mod corpus;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod levels;
pub mod masks;
pub mod metrics;
pub mod model;
pub mod noise;

pub use error::{Error, Result};
pub use noise::Split;

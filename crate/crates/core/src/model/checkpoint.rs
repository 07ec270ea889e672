use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BlstmConfig, ParamBlock};
use super::network::{BlstmNetwork, FeatureNorm};
use super::train::{TrainHistory, TrainSchedule};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UPITCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained network with the settings that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: BlstmNetwork,
    pub stft: StftConfig,
    pub schedule: Option<TrainSchedule>,
    pub history: Option<TrainHistory>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: BlstmConfig,
    blocks: Vec<ParamBlock>,
    feature_norm: Option<FeatureNorm>,
    stft: StftConfig,
    schedule: Option<TrainSchedule>,
    history: Option<TrainHistory>,
}

impl Checkpoint {
    /// Layout: magic, version (u32 LE), header length (u64 LE), JSON header,
    /// then every parameter as f64 LE in layout order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let header = Header {
            config: *net.config(),
            blocks: net.layout().blocks.clone(),
            feature_norm: net.feature_norm().cloned(),
            stft: self.stft,
            schedule: self.schedule.clone(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serialises");
        let params = net.parameters();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let corrupt = |detail: &str| Error::Corrupt {
            path: origin.to_path_buf(),
            detail: detail.to_string(),
        };
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(&format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| corrupt(&format!("header: {e}")))?;
        let raw = &body[header_len..];
        let zero = BlstmNetwork::zeros(header.config)?;
        if zero.layout().blocks != header.blocks {
            return Err(corrupt("parameter layout does not match the configuration"));
        }
        if raw.len() != 8 * zero.layout().len() {
            return Err(corrupt(&format!(
                "{} parameter bytes, expected {}",
                raw.len(),
                8 * zero.layout().len()
            )));
        }
        let params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let network = BlstmNetwork::from_parameters(header.config, params, header.feature_norm)?;
        Ok(Self {
            network,
            stft: header.stft,
            schedule: header.schedule,
            history: header.history,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let mut net = BlstmNetwork::new(BlstmConfig::desk(), 9).unwrap();
        net.set_feature_norm(Some(FeatureNorm {
            mean: vec![0.5; 129],
            inv_std: vec![2.0; 129],
        }))
        .unwrap();
        let ckpt = Checkpoint {
            network: net.clone(),
            stft: StftConfig::default(),
            schedule: Some(TrainSchedule::desk()),
            history: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.network.parameters(), net.parameters());
        assert_eq!(back.network.feature_norm(), net.feature_norm());
        assert_eq!(back.schedule, Some(TrainSchedule::desk()));
        assert_eq!(back.to_bytes(), ckpt.to_bytes());
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let p = Path::new("x");
        assert!(matches!(
            Checkpoint::from_bytes(b"NOTACHECKPOINT......", p),
            Err(Error::Corrupt { .. })
        ));
        let ckpt = Checkpoint {
            network: BlstmNetwork::new(BlstmConfig::desk(), 1).unwrap(),
            stft: StftConfig::default(),
            schedule: None,
            history: None,
        };
        let bytes = ckpt.to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3], p),
            Err(Error::Corrupt { .. })
        ));
    }

    #[test]
    fn missing_file_is_missing_input() {
        assert!(matches!(
            load_checkpoint(Path::new("/nonexistent/model.ckpt")),
            Err(Error::MissingInput(_))
        ));
    }
}

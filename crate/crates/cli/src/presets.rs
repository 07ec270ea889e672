use std::str::FromStr;

use upit::corpus::Composition;
use upit::model::{BlstmConfig, TrainSchedule};

/// Named experiment configurations: the desk setup, the WSJ0-like dataset
/// shapes, and the seven trained models of the full-scale study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    TwoMix,
    ThreeMix,
    TwoPlusThreeMix,
    Lstm(u8),
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "desk" => Ok(Preset::Desk),
            "wsj0-2mix-like" => Ok(Preset::TwoMix),
            "wsj0-3mix-like" => Ok(Preset::ThreeMix),
            "wsj0-2+3mix-like" => Ok(Preset::TwoPlusThreeMix),
            _ => match lower.strip_prefix("lstm").and_then(|n| n.parse::<u8>().ok()) {
                Some(n @ 1..=7) => Ok(Preset::Lstm(n)),
                _ => Err(format!(
                    "unknown preset {s:?} (expected desk, wsj0-2mix-like, wsj0-3mix-like, wsj0-2+3mix-like or LSTM1..LSTM7)"
                )),
            },
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Preset::Desk => f.write_str("desk"),
            Preset::TwoMix => f.write_str("wsj0-2mix-like"),
            Preset::ThreeMix => f.write_str("wsj0-3mix-like"),
            Preset::TwoPlusThreeMix => f.write_str("wsj0-2+3mix-like"),
            Preset::Lstm(n) => write!(f, "LSTM{n}"),
        }
    }
}

impl Preset {
    pub fn composition(self) -> Composition {
        match self {
            Preset::Desk | Preset::TwoMix | Preset::Lstm(6) => Composition::TwoSpeaker,
            Preset::ThreeMix | Preset::Lstm(7) => Composition::ThreeSpeaker,
            Preset::TwoPlusThreeMix | Preset::Lstm(_) => Composition::TwoPlusThree,
        }
    }

    /// Noise ids the training set is built from; `None` means every
    /// supplied noise.
    pub fn noise_ids(self) -> Option<Vec<String>> {
        let ids: &[&str] = match self {
            Preset::Desk => &["ssn", "bbl"],
            Preset::Lstm(1) => &["ssn"],
            Preset::Lstm(2) | Preset::Lstm(6) | Preset::Lstm(7) => &["bbl"],
            Preset::Lstm(3) => &["str"],
            Preset::Lstm(4) => &["caf"],
            Preset::Lstm(5) => &["ssn", "bbl", "str", "caf"],
            _ => return None,
        };
        Some(ids.iter().map(|s| s.to_string()).collect())
    }

    /// Mixture counts per split (train, validation, test).
    pub fn counts(self) -> (usize, usize, usize) {
        match self {
            Preset::Desk => (200, 40, 40),
            _ => (20_000, 5_000, 3_000),
        }
    }

    pub fn network(self) -> BlstmConfig {
        match self {
            Preset::Desk => BlstmConfig::desk(),
            Preset::Lstm(6) => BlstmConfig::full_scale(896),
            _ => BlstmConfig::full_scale(1280),
        }
    }

    pub fn schedule(self) -> TrainSchedule {
        match self {
            Preset::Desk => TrainSchedule::desk(),
            _ => TrainSchedule::full_scale(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in ["desk", "wsj0-2mix-like", "wsj0-3mix-like", "wsj0-2+3mix-like", "LSTM1", "LSTM7"] {
            assert_eq!(name.parse::<Preset>().unwrap().to_string(), name);
        }
        assert!("LSTM8".parse::<Preset>().is_err());
        assert_eq!("lstm3".parse::<Preset>().unwrap(), Preset::Lstm(3));
    }

    #[test]
    fn model_matrix() {
        let combined: Vec<u8> = (1..=7)
            .filter(|&n| Preset::Lstm(n).composition() == Composition::TwoPlusThree)
            .collect();
        assert_eq!(combined, vec![1, 2, 3, 4, 5]);
        assert_eq!(Preset::Lstm(5).noise_ids().unwrap().len(), 4);
        assert_eq!(Preset::Lstm(6).network().cells_per_direction, 896);
        assert_eq!(Preset::Lstm(7).composition(), Composition::ThreeSpeaker);
        assert_eq!(Preset::Lstm(6).network().output_sources, 3);
    }
}

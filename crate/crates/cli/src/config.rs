use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Parsed `--config` file: optional top-level `preset` and `seed`, plus one
/// table per subcommand whose keys are that command's setting names.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    root: serde_json::Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        match serde_json::to_value(table).expect("toml tables map to json") {
            Value::Object(root) => Ok(Self { root }),
            _ => unreachable!("a toml document is a table"),
        }
    }

    pub fn preset(&self) -> Option<&str> {
        self.root.get("preset").and_then(Value::as_str)
    }

    fn section(&self, name: &str) -> Option<&serde_json::Map<String, Value>> {
        self.root.get(name).and_then(Value::as_object)
    }

    fn seed(&self) -> Option<&Value> {
        self.root.get("seed")
    }
}

fn overlay(base: &mut serde_json::Map<String, Value>, top: &serde_json::Map<String, Value>) {
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k.clone(), v.clone());
        }
    }
}

/// Effective settings: preset defaults, overlaid by the config file section
/// (and its top-level seed), overlaid by explicitly given flags.
pub fn resolve<T, F>(defaults: T, config: &ConfigFile, section: &str, flags: &F) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
    F: Serialize,
{
    let Value::Object(mut merged) = serde_json::to_value(defaults).expect("settings serialise") else {
        unreachable!("settings are structs")
    };
    if let Some(seed) = config.seed() {
        if merged.contains_key("seed") {
            merged.insert("seed".into(), seed.clone());
        }
    }
    if let Some(sec) = config.section(section) {
        for k in sec.keys() {
            if !merged.contains_key(k) {
                return Err(CliError::Usage(format!("unknown setting [{section}].{k}")));
            }
        }
        overlay(&mut merged, sec);
    }
    if let Value::Object(f) = serde_json::to_value(flags).expect("flags serialise") {
        overlay(&mut merged, &f);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("[{section}]: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct S {
        lr: f64,
        epochs: usize,
        seed: u64,
    }

    #[derive(Serialize)]
    struct Flags {
        #[serde(skip_serializing_if = "Option::is_none")]
        epochs: Option<usize>,
    }

    fn cfg(text: &str) -> ConfigFile {
        let table: toml::Table = toml::from_str(text).unwrap();
        match serde_json::to_value(table).unwrap() {
            Value::Object(root) => ConfigFile { root },
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_beat_file_beat_preset() {
        let d = S {
            lr: 1.0,
            epochs: 5,
            seed: 0,
        };
        let c = cfg("seed = 9\n[train]\nlr = 0.5\nepochs = 7\n");
        let s = resolve(d, &c, "train", &Flags { epochs: Some(3) }).unwrap();
        assert_eq!(
            s,
            S {
                lr: 0.5,
                epochs: 3,
                seed: 9
            }
        );
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let d = S {
            lr: 1.0,
            epochs: 5,
            seed: 0,
        };
        let c = cfg("[train]\nlearning_rate = 0.5\n");
        assert!(matches!(
            resolve(d, &c, "train", &Flags { epochs: None }),
            Err(CliError::Usage(_))
        ));
    }
}

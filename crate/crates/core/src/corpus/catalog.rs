use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wav::read_wav;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::noise::Split;

pub const CATALOG_FORMAT: &str = "upit-catalog";
pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub split: Split,
    /// Relative to the catalog root.
    pub path: PathBuf,
    pub num_samples: usize,
    pub sample_rate: u32,
}

impl CatalogEntry {
    pub fn duration_secs(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CatalogHeader {
    format: String,
    version: u32,
    root: PathBuf,
}

/// Utterances of a speech corpus with speaker and split labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusCatalog {
    pub root: PathBuf,
    pub entries: Vec<CatalogEntry>,
}

impl CorpusCatalog {
    /// Indexes `<root>/<split>/<speaker>/<utterance>.wav`, sorted by path.
    pub fn scan(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::MissingInput(root.to_path_buf()));
        }
        let mut entries = Vec::new();
        for split in Split::ALL {
            let split_dir = root.join(split.as_str());
            if !split_dir.is_dir() {
                continue;
            }
            for speaker in sorted_children(&split_dir)? {
                if !speaker.is_dir() {
                    continue;
                }
                let speaker_id = file_name(&speaker);
                for file in sorted_children(&speaker)? {
                    if file.extension().and_then(|e| e.to_str()) != Some("wav") {
                        continue;
                    }
                    let reader = hound::WavReader::open(&file).map_err(|e| Error::Corrupt {
                        path: file.clone(),
                        detail: e.to_string(),
                    })?;
                    let spec = reader.spec();
                    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                    entries.push(CatalogEntry {
                        utterance_id: format!("{speaker_id}/{stem}"),
                        speaker_id: speaker_id.clone(),
                        split,
                        path: file.strip_prefix(root).expect("child of root").to_path_buf(),
                        num_samples: reader.duration() as usize,
                        sample_rate: spec.sample_rate,
                    });
                }
            }
        }
        let cat = Self {
            root: root.to_path_buf(),
            entries,
        };
        cat.validate()?;
        Ok(cat)
    }

    /// Test speakers must not occur in the training or validation splits.
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Catalog(format!("no utterances under {}", self.root.display())));
        }
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(&e.utterance_id) {
                return Err(Error::Catalog(format!("duplicate utterance id {}", e.utterance_id)));
            }
        }
        let test = self.speakers(Split::Test);
        let mut shared: Vec<&String> = self
            .speakers(Split::Train)
            .union(&self.speakers(Split::Validation))
            .filter(|s| test.contains(*s))
            .cloned()
            .collect();
        shared.dedup();
        if !shared.is_empty() {
            return Err(Error::Catalog(format!(
                "test speakers also appear in training or validation: {shared:?}"
            )));
        }
        Ok(())
    }

    pub fn speakers(&self, split: Split) -> BTreeSet<&String> {
        self.entries.iter().filter(|e| e.split == split).map(|e| &e.speaker_id).collect()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn get(&self, utterance_id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.utterance_id == utterance_id)
    }

    pub fn load(&self, entry: &CatalogEntry) -> Result<Waveform> {
        read_wav(&self.root.join(&entry.path))
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Waveform>> {
        self.in_split(split).map(|e| self.load(e)).collect()
    }

    pub fn load_all(&self) -> Result<Vec<Waveform>> {
        self.entries.iter().map(|e| self.load(e)).collect()
    }

    /// JSON lines: a header, then one entry per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let header = CatalogHeader {
            format: CATALOG_FORMAT.into(),
            version: CATALOG_VERSION,
            root: self.root.clone(),
        };
        serde_json::to_writer(&mut out, &header).expect("header serialises");
        out.push(b'\n');
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).expect("entry serialises");
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load_from(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse(path, "empty catalog"))?
            .map_err(|e| Error::io(path, e))?;
        let header: CatalogHeader = serde_json::from_str(&first).map_err(|e| Error::parse(path, e))?;
        if header.format != CATALOG_FORMAT || header.version != CATALOG_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported catalog {} v{}", header.format, header.version),
            ));
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, e))?);
        }
        let cat = Self {
            root: header.root,
            entries,
        };
        cat.validate()?;
        Ok(cat)
    }
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    v.sort();
    Ok(v)
}

fn file_name(p: &Path) -> String {
    p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_wav;

    fn put(root: &Path, split: &str, spk: &str, utt: &str, len: usize) {
        let d = root.join(split).join(spk);
        std::fs::create_dir_all(&d).unwrap();
        write_wav(&Waveform::new(vec![0.1; len], 8000), &d.join(format!("{utt}.wav"))).unwrap();
    }

    #[test]
    fn scan_save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "train", "m01", "a", 100);
        put(dir.path(), "train", "f02", "b", 120);
        put(dir.path(), "validation", "m01", "c", 90);
        put(dir.path(), "test", "f09", "d", 80);
        let cat = CorpusCatalog::scan(dir.path()).unwrap();
        assert_eq!(cat.entries.len(), 4);
        assert_eq!(cat.entries[0].utterance_id, "f02/b");
        assert_eq!(cat.get("f09/d").unwrap().num_samples, 80);
        let p = dir.path().join("catalog.jsonl");
        cat.save(&p).unwrap();
        assert_eq!(CorpusCatalog::load_from(&p).unwrap(), cat);
        assert_eq!(cat.load(&cat.entries[0]).unwrap().len(), 120);
    }

    #[test]
    fn shared_test_speaker_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "train", "m01", "a", 100);
        put(dir.path(), "test", "m01", "b", 100);
        assert!(matches!(CorpusCatalog::scan(dir.path()), Err(Error::Catalog(_))));
    }

    #[test]
    fn missing_root() {
        assert!(matches!(
            CorpusCatalog::scan(Path::new("/nonexistent/corpus")),
            Err(Error::MissingInput(_))
        ));
    }
}

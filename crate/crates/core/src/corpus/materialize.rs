use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::CorpusCatalog;
use super::checksum::{checksum_hex, CHECKSUM_ALGORITHM};
use super::manifest::{DatasetManifest, DatasetRecipe};
use super::wav::{dequantize, encode_wav_i16, quantize, read_wav_i16};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::levels::{add_noise_at_snr, add_silent_speaker, mix_speakers, MixtureExample, MixtureRecipe};
use crate::noise::Split;

pub const INDEX_FILE: &str = "index.jsonl";
pub const INDEX_FORMAT: &str = "upit-index";
pub const INDEX_VERSION: u32 = 1;

/// Largest stored sample magnitude after the storage gain.
pub const STORAGE_PEAK: f64 = 0.9;

/// Synthesises one example from its recipe in double precision.
pub fn synthesize_example(
    recipe: &MixtureRecipe,
    catalog: &CorpusCatalog,
    noises: &HashMap<String, Waveform>,
) -> Result<MixtureExample> {
    recipe.validate()?;
    let utts = recipe
        .source_ids
        .iter()
        .map(|id| {
            let e = catalog
                .get(id)
                .ok_or_else(|| Error::Catalog(format!("unknown utterance {id}")))?;
            catalog.load(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let mix = mix_speakers(&utts, &recipe.level_offsets_db)?;
    let mut ex = MixtureExample {
        mixture: mix.mixture,
        sources: mix.sources,
        noise: None,
        recipe: MixtureRecipe {
            source_gains: mix.gains,
            ..recipe.clone()
        },
    };
    if recipe.silent_speaker_present {
        ex = add_silent_speaker(&ex, recipe.seed)?;
    }
    if let (Some(id), Some(offset), Some(snr)) = (&recipe.noise_id, recipe.noise_offset, recipe.snr_db) {
        let noise = noises
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("noise {id} not loaded")))?;
        ex = add_noise_at_snr(&ex, noise, offset, snr)?;
    }
    ex.recipe.seed = recipe.seed;
    Ok(ex)
}

/// Files and checksums of one stored example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub split: Split,
    /// Paths relative to the dataset root.
    pub mixture: PathBuf,
    pub sources: Vec<PathBuf>,
    pub noise: Option<PathBuf>,
    pub checksums: BTreeMap<String, String>,
    /// Linear gain applied to every component before quantisation.
    pub storage_gain: f64,
    pub recipe: MixtureRecipe,
}

impl IndexEntry {
    /// Real (non-silent) speakers in the mixture.
    pub fn speakers(&self) -> usize {
        self.recipe.source_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    checksum_algorithm: String,
}

/// The checksum index of a materialised dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = BufReader::new(f).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse(&path, "empty index"))?
            .map_err(|e| Error::io(&path, e))?;
        let header: IndexHeader = serde_json::from_str(&first).map_err(|e| Error::parse(&path, e))?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(Error::parse(&path, "unsupported index format"));
        }
        let mut entries = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if !line.trim().is_empty() {
                entries.push(serde_json::from_str(&line).map_err(|e| Error::parse(&path, e))?);
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }

    fn save(&self) -> Result<()> {
        let path = self.root.join(INDEX_FILE);
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            checksum_algorithm: CHECKSUM_ALGORITHM.into(),
        };
        let mut out = serde_json::to_string(&header).expect("header serialises");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serialises"));
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Loads a stored example, verifying checksums and exact additivity.
    pub fn load_example(&self, entry: &IndexEntry) -> Result<MixtureExample> {
        let read = |rel: &Path| -> Result<(Vec<i16>, u32)> {
            let path = self.root.join(rel);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let key = rel.to_string_lossy().into_owned();
            if let Some(recorded) = entry.checksums.get(&key) {
                let computed = checksum_hex(&bytes);
                if &computed != recorded {
                    return Err(Error::ChecksumConflict {
                        path,
                        recorded: recorded.clone(),
                        computed,
                    });
                }
            }
            read_wav_i16(&path)
        };
        let (mix, fs) = read(&entry.mixture)?;
        let sources = entry
            .sources
            .iter()
            .map(|p| read(p).map(|(q, _)| q))
            .collect::<Result<Vec<_>>>()?;
        let noise = entry.noise.as_deref().map(read).transpose()?.map(|(q, _)| q);
        for n in 0..mix.len() {
            let mut sum: i32 = sources.iter().map(|s| s.get(n).copied().unwrap_or(0) as i32).sum();
            sum += noise.as_ref().map_or(0, |q| q.get(n).copied().unwrap_or(0) as i32);
            if sum != mix[n] as i32 {
                return Err(Error::Corrupt {
                    path: self.root.join(&entry.mixture),
                    detail: format!("mixture is not the sum of its components at sample {n}"),
                });
            }
        }
        let to_wave = |q: Vec<i16>| Waveform::new(q.into_iter().map(dequantize).collect(), fs);
        Ok(MixtureExample {
            mixture: to_wave(mix),
            sources: sources.into_iter().map(to_wave).collect(),
            noise: noise.map(to_wave),
            recipe: entry.recipe.clone(),
        })
    }
}

struct Rendered {
    entry: IndexEntry,
    files: Vec<(PathBuf, Vec<u8>)>,
}

fn render(recipe: &DatasetRecipe, ex: &MixtureExample) -> Rendered {
    let mut peak = ex.mixture.peak();
    for s in ex.sources.iter().chain(ex.noise.as_ref()) {
        peak = peak.max(s.peak());
    }
    let gain = if peak > STORAGE_PEAK { STORAGE_PEAK / peak } else { 1.0 };
    let quant = |w: &Waveform| -> Vec<i16> { w.samples.iter().map(|&x| quantize(gain * x)).collect() };
    let sources: Vec<Vec<i16>> = ex.sources.iter().map(quant).collect();
    let noise: Option<Vec<i16>> = ex.noise.as_ref().map(quant);
    // the stored mixture is the integer sum, so additivity holds exactly on load
    let mixture: Vec<i16> = (0..ex.mixture.len())
        .map(|n| {
            let s: i32 = sources.iter().map(|q| q[n] as i32).sum::<i32>()
                + noise.as_ref().map_or(0, |q| q[n] as i32);
            s.clamp(i16::MIN as i32, i16::MAX as i32) as i16
        })
        .collect();
    let fs = ex.mixture.sample_rate;
    let dir = PathBuf::from(recipe.split.as_str()).join(&recipe.id);
    let mut files = vec![(dir.join("mix.wav"), encode_wav_i16(&mixture, fs))];
    let mut source_paths = Vec::new();
    for (i, q) in sources.iter().enumerate() {
        let p = dir.join(format!("s{}.wav", i + 1));
        source_paths.push(p.clone());
        files.push((p, encode_wav_i16(q, fs)));
    }
    let noise_path = noise.as_ref().map(|q| {
        let p = dir.join("noise.wav");
        files.push((p.clone(), encode_wav_i16(q, fs)));
        p
    });
    let checksums = files
        .iter()
        .map(|(p, b)| (p.to_string_lossy().into_owned(), checksum_hex(b)))
        .collect();
    Rendered {
        entry: IndexEntry {
            id: recipe.id.clone(),
            split: recipe.split,
            mixture: dir.join("mix.wav"),
            sources: source_paths,
            noise: noise_path,
            checksums,
            storage_gain: gain,
            recipe: ex.recipe.clone(),
        },
        files,
    }
}

/// Synthesises every recipe and writes `<split>/<id>/{mix,s1..sN,noise}.wav`
/// plus the checksum index under `out_dir`.
///
/// Examples are synthesised in parallel; nothing is written until all have
/// succeeded. When an index already exists, any file whose recorded checksum
/// differs from the regenerated one is reported as a conflict.
pub fn materialize(manifest: &DatasetManifest, catalog: &CorpusCatalog, out_dir: &Path) -> Result<DatasetIndex> {
    manifest.check_against(catalog)?;
    let mut noises = HashMap::new();
    for n in &manifest.header.noises {
        noises.insert(n.id.clone(), n.load_waveform()?);
    }
    let rendered = manifest
        .recipes
        .par_iter()
        .map(|r| synthesize_example(&r.recipe, catalog, &noises).map(|ex| render(r, &ex)))
        .collect::<Result<Vec<_>>>()?;

    if out_dir.join(INDEX_FILE).exists() {
        let previous = DatasetIndex::load(out_dir)?;
        let recorded: HashMap<&String, &String> =
            previous.entries.iter().flat_map(|e| e.checksums.iter()).collect();
        for r in &rendered {
            for (path, sum) in &r.entry.checksums {
                if let Some(old) = recorded.get(path) {
                    if *old != sum {
                        return Err(Error::ChecksumConflict {
                            path: out_dir.join(path),
                            recorded: (*old).clone(),
                            computed: sum.clone(),
                        });
                    }
                }
            }
        }
    }

    for r in &rendered {
        for (rel, bytes) in &r.files {
            let path = out_dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
    }
    let index = DatasetIndex {
        root: out_dir.to_path_buf(),
        entries: rendered.into_iter().map(|r| r.entry).collect(),
    };
    index.save()?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_manifest, generate_corpus, synthesize_noise, write_noise, NoiseKind, SplitCounts};
    use crate::corpus::{DatasetSpec, SyntheticCorpusSpec};
    use crate::dsp::StftConfig;

    fn setup(dir: &Path) -> (DatasetManifest, CorpusCatalog) {
        let spec = SyntheticCorpusSpec {
            train_speakers: 3,
            train_utterances: 2,
            validation_utterances: 1,
            test_speakers: 2,
            test_utterances: 1,
            ..SyntheticCorpusSpec::desk(2)
        };
        let cat = generate_corpus(&dir.join("corpus"), &spec).unwrap();
        let speech = cat.load_split(Split::Train).unwrap();
        let noise = synthesize_noise(NoiseKind::Ssn, &speech, 4, 40.0, 1).unwrap();
        let nm = write_noise(
            &noise,
            "ssn",
            NoiseKind::Ssn,
            1,
            4,
            &cat.root,
            &dir.join("ssn.wav"),
            (8.0, 1.0, 1.0),
        )
        .unwrap();
        let ds = DatasetSpec {
            counts: SplitCounts {
                train: 2,
                validation: 1,
                test: 1,
            },
            ..DatasetSpec::desk(vec!["ssn".into()], 4)
        };
        let m = build_manifest(&cat, Path::new("catalog.jsonl"), &[nm], &ds, StftConfig::default()).unwrap();
        (m, cat)
    }

    #[test]
    fn writes_components_and_reloads_additively() {
        let dir = tempfile::tempdir().unwrap();
        let (m, cat) = setup(dir.path());
        let out = dir.path().join("data");
        let index = materialize(&m, &cat, &out).unwrap();
        assert_eq!(index.entries.len(), 4);
        let e = &index.entries[0];
        // mixture, two speakers, the silent speaker and the noise
        assert_eq!(e.checksums.len(), 1 + 3 + 1);
        assert!(out.join(&e.mixture).is_file());
        assert!(e.storage_gain > 0.0 && e.storage_gain <= 1.0);

        let reloaded = DatasetIndex::load(&out).unwrap();
        assert_eq!(reloaded, index);
        let ex = reloaded.load_example(e).unwrap();
        assert!(ex.additivity_error() < 1e-12);
        assert_eq!(ex.sources.len(), 3);
        assert!(ex.mixture.peak() <= STORAGE_PEAK + 1e-3);
    }

    #[test]
    fn rematerialising_is_bit_identical_and_conflicts_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let (m, cat) = setup(dir.path());
        let out = dir.path().join("data");
        let first = materialize(&m, &cat, &out).unwrap();
        let second = materialize(&m, &cat, &out).unwrap();
        assert_eq!(first, second);

        let mut changed = m.clone();
        changed.recipes[0].recipe.snr_db = Some(changed.recipes[0].recipe.snr_db.unwrap() + 3.0);
        assert!(matches!(
            materialize(&changed, &cat, &out),
            Err(Error::ChecksumConflict { .. })
        ));
    }

    #[test]
    fn tampered_file_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let (m, cat) = setup(dir.path());
        let out = dir.path().join("data");
        let index = materialize(&m, &cat, &out).unwrap();
        let e = &index.entries[1];
        let p = out.join(&e.sources[0]);
        let mut bytes = std::fs::read(&p).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x55;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(index.load_example(e), Err(Error::ChecksumConflict { .. })));
    }
}

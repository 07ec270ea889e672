use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{CatalogEntry, CorpusCatalog};
use super::checksum::{checksum_hex, CHECKSUM_ALGORITHM};
use super::wav::{encode_wav_i16, quantize, read_wav};
use crate::dsp::{StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::levels::MixtureRecipe;
use crate::noise::{gen_bbl, gen_ssn, PartitionBounds, Split};

pub const NOISE_MANIFEST_FORMAT: &str = "upit-noise";
pub const DATASET_MANIFEST_FORMAT: &str = "upit-dataset";
pub const MANIFEST_VERSION: u32 = 1;

/// Noise files are written with this peak so PCM16 storage never clips.
const NOISE_STORAGE_PEAK: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Ssn,
    Bbl,
    /// A user-supplied recording, only partitioned.
    Recorded,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Ssn => "ssn",
            NoiseKind::Bbl => "bbl",
            NoiseKind::Recorded => "recorded",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssn" => Ok(NoiseKind::Ssn),
            "bbl" | "babble" => Ok(NoiseKind::Bbl),
            "recorded" => Ok(NoiseKind::Recorded),
            other => Err(Error::InvalidArgument(format!("unknown noise type {other:?}"))),
        }
    }
}

/// Description of one synthesised noise file and its partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseManifest {
    pub format: String,
    pub version: u32,
    pub id: String,
    pub kind: NoiseKind,
    pub seed: u64,
    /// Root of the corpus the noise was derived from.
    pub source_corpus: PathBuf,
    /// Sentences for SSN, talker groups for BBL.
    pub units: usize,
    pub wav: PathBuf,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub bounds: PartitionBounds,
    pub checksum: String,
}

/// Synthesises SSN or BBL from a corpus. `duration_secs` applies to SSN only;
/// babble is as long as its shortest talker group.
pub fn synthesize_noise(
    kind: NoiseKind,
    corpus: &[Waveform],
    units: usize,
    duration_secs: f64,
    seed: u64,
) -> Result<Waveform> {
    match kind {
        NoiseKind::Ssn => Ok(gen_ssn(corpus, units, duration_secs, seed)?.noise),
        NoiseKind::Bbl => gen_bbl(corpus, units, seed),
        NoiseKind::Recorded => Err(Error::InvalidArgument("recorded noise is imported, not synthesised".into())),
    }
}

/// Scales `noise` to the storage peak, writes it as PCM16 and returns its
/// manifest (partitioned 8:1:1 unless `ratios` says otherwise).
#[allow(clippy::too_many_arguments)]
pub fn write_noise(
    noise: &Waveform,
    id: &str,
    kind: NoiseKind,
    seed: u64,
    units: usize,
    source_corpus: &Path,
    wav_path: &Path,
    ratios: (f64, f64, f64),
) -> Result<NoiseManifest> {
    noise.validate()?;
    let peak = noise.peak();
    if peak == 0.0 {
        return Err(Error::DegenerateSignal("silent noise".into()));
    }
    let g = NOISE_STORAGE_PEAK / peak;
    let q: Vec<i16> = noise.samples.iter().map(|&x| quantize(g * x)).collect();
    let bytes = encode_wav_i16(&q, noise.sample_rate);
    std::fs::write(wav_path, &bytes).map_err(|e| Error::io(wav_path, e))?;
    Ok(NoiseManifest {
        format: NOISE_MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        id: id.into(),
        kind,
        seed,
        source_corpus: source_corpus.to_path_buf(),
        units,
        wav: wav_path.to_path_buf(),
        sample_rate: noise.sample_rate,
        num_samples: noise.len(),
        bounds: PartitionBounds::from_ratios(noise.len(), ratios)?,
        checksum: checksum_hex(&bytes),
    })
}

impl NoiseManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("noise manifest serialises");
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if m.format != NOISE_MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::parse(path, format!("unsupported noise manifest {} v{}", m.format, m.version)));
        }
        Ok(m)
    }

    /// Reads the noise file, checking its checksum and length.
    pub fn load_waveform(&self) -> Result<Waveform> {
        let bytes = std::fs::read(&self.wav).map_err(|e| Error::io(&self.wav, e))?;
        let computed = checksum_hex(&bytes);
        if computed != self.checksum {
            return Err(Error::ChecksumConflict {
                path: self.wav.clone(),
                recorded: self.checksum.clone(),
                computed,
            });
        }
        let w = read_wav(&self.wav)?;
        if w.len() != self.num_samples {
            return Err(Error::Corrupt {
                path: self.wav.clone(),
                detail: format!("{} samples, manifest says {}", w.len(), self.num_samples),
            });
        }
        Ok(w)
    }
}

/// Speaker composition of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    TwoSpeaker,
    ThreeSpeaker,
    /// The first half of every split (rounded up) has two speakers, the rest three.
    TwoPlusThree,
}

impl Composition {
    pub fn speakers_for(self, index: usize, count: usize) -> usize {
        match self {
            Composition::TwoSpeaker => 2,
            Composition::ThreeSpeaker => 3,
            Composition::TwoPlusThree => {
                if index < count.div_ceil(2) {
                    2
                } else {
                    3
                }
            }
        }
    }

    pub fn rule(self) -> &'static str {
        match self {
            Composition::TwoSpeaker => "every mixture has two speakers",
            Composition::ThreeSpeaker => "every mixture has three speakers",
            Composition::TwoPlusThree => {
                "half of the mixtures contain three speakers, the other half two"
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

/// Sampling distributions for [`build_manifest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub composition: Composition,
    pub counts: SplitCounts,
    /// Network outputs; two-speaker mixtures get a silent speaker when 3.
    pub output_sources: usize,
    /// Noise ids to use; empty for clean mixtures.
    pub noise_ids: Vec<String>,
    /// Uniform SNR range for training and validation.
    pub train_snr_db: (f64, f64),
    /// SNRs cycled through on the test split.
    pub test_snrs_db: Vec<f64>,
    /// Uniform range of each speaker's level below speaker 1.
    pub level_offset_db: (f64, f64),
    pub seed: u64,
}

impl DatasetSpec {
    /// 200 / 40 / 40 two-speaker mixtures in two noise types.
    pub fn desk(noise_ids: Vec<String>, seed: u64) -> Self {
        Self {
            name: "desk".into(),
            composition: Composition::TwoSpeaker,
            counts: SplitCounts {
                train: 200,
                validation: 40,
                test: 40,
            },
            output_sources: 3,
            noise_ids,
            train_snr_db: (-5.0, 10.0),
            test_snrs_db: vec![-5.0, 0.0, 5.0, 20.0],
            level_offset_db: (0.0, 5.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(2..=3).contains(&self.output_sources) {
            return bad(format!("output sources {} not in 2..=3", self.output_sources));
        }
        if self.output_sources == 2 && self.composition != Composition::TwoSpeaker {
            return bad("two-output datasets must be two-speaker".into());
        }
        if self.train_snr_db.0 > self.train_snr_db.1 || self.level_offset_db.0 > self.level_offset_db.1 {
            return bad("empty sampling range".into());
        }
        if !self.noise_ids.is_empty() && self.test_snrs_db.is_empty() {
            return bad("noisy dataset needs test SNRs".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub spec: DatasetSpec,
    pub composition_rule: String,
    pub catalog: PathBuf,
    pub noises: Vec<NoiseManifest>,
    pub stft: StftConfig,
    pub checksum_algorithm: String,
    /// Free-form effective configuration of the producing command.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecipe {
    pub id: String,
    pub split: Split,
    pub recipe: MixtureRecipe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub recipes: Vec<DatasetRecipe>,
}

fn split_seed(seed: u64, split: Split) -> u64 {
    let mut z = seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(split as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Samples mixture recipes for every split.
///
/// Speakers are drawn uniformly without replacement from the split, then one
/// utterance uniformly per speaker. Noise types alternate by recipe index and
/// test SNRs cycle within each noise type; noise offsets are uniform over the
/// positions whose whole segment lies inside the split's noise partition.
pub fn build_manifest(
    catalog: &CorpusCatalog,
    catalog_path: &Path,
    noises: &[NoiseManifest],
    spec: &DatasetSpec,
    stft: StftConfig,
) -> Result<DatasetManifest> {
    spec.validate()?;
    catalog.validate()?;
    let selected: Vec<&NoiseManifest> = spec
        .noise_ids
        .iter()
        .map(|id| {
            noises
                .iter()
                .find(|n| &n.id == id)
                .ok_or_else(|| Error::InvalidArgument(format!("no noise manifest with id {id:?}")))
        })
        .collect::<Result<_>>()?;

    let mut recipes = Vec::new();
    for split in Split::ALL {
        let count = spec.counts.get(split);
        if count == 0 {
            continue;
        }
        let mut by_speaker: BTreeMap<&str, Vec<&CatalogEntry>> = BTreeMap::new();
        for e in catalog.in_split(split) {
            by_speaker.entry(&e.speaker_id).or_default().push(e);
        }
        let speakers: Vec<&str> = by_speaker.keys().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(spec.seed, split));
        for i in 0..count {
            let n = spec.composition.speakers_for(i, count);
            if speakers.len() < n {
                return Err(Error::InsufficientCorpus(format!(
                    "{} split has {} speakers, a {n}-speaker mixture needs {n}",
                    split.as_str(),
                    speakers.len()
                )));
            }
            let chosen: Vec<&str> = speakers.choose_multiple(&mut rng, n).copied().collect();
            let utts: Vec<&CatalogEntry> = chosen
                .iter()
                .map(|s| *by_speaker[s].choose(&mut rng).expect("speaker has utterances"))
                .collect();
            let (lo, hi) = spec.level_offset_db;
            let level_offsets_db: Vec<f64> = (1..n).map(|_| rng.random_range(lo..=hi)).collect();
            let len = utts.iter().map(|u| u.num_samples).max().unwrap_or(0);

            let (noise_id, noise_offset, snr_db) = if selected.is_empty() {
                (None, None, None)
            } else {
                let k = selected.len();
                let noise = selected[i % k];
                let range = noise.bounds.range(split);
                if range.len() < len {
                    return Err(Error::InsufficientCorpus(format!(
                        "{} partition of noise {} has {} samples, mixture needs {len}",
                        split.as_str(),
                        noise.id,
                        range.len()
                    )));
                }
                let offset = rng.random_range(range.start..=range.end - len);
                let snr = match split {
                    Split::Test => spec.test_snrs_db[(i / k) % spec.test_snrs_db.len()],
                    _ => rng.random_range(spec.train_snr_db.0..=spec.train_snr_db.1),
                };
                (Some(noise.id.clone()), Some(offset), Some(snr))
            };
            let recipe = MixtureRecipe {
                source_ids: utts.iter().map(|u| u.utterance_id.clone()).collect(),
                level_offsets_db,
                source_gains: Vec::new(),
                silent_speaker_present: n == 2 && spec.output_sources == 3,
                noise_id,
                noise_offset,
                snr_db,
                seed: rng.random(),
            };
            recipe.validate()?;
            recipes.push(DatasetRecipe {
                id: format!("{}-{i:05}", split.as_str()),
                split,
                recipe,
            });
        }
    }
    Ok(DatasetManifest {
        header: ManifestHeader {
            format: DATASET_MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            spec: spec.clone(),
            composition_rule: spec.composition.rule().into(),
            catalog: catalog_path.to_path_buf(),
            noises: selected.into_iter().cloned().collect(),
            stft,
            checksum_algorithm: CHECKSUM_ALGORITHM.into(),
            provenance: BTreeMap::new(),
        },
        recipes,
    })
}

impl DatasetManifest {
    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &DatasetRecipe> {
        self.recipes.iter().filter(move |r| r.split == split)
    }

    pub fn noise(&self, id: &str) -> Option<&NoiseManifest> {
        self.header.noises.iter().find(|n| n.id == id)
    }

    /// Checks that every utterance id resolves and every noise segment lies
    /// inside the partition of its split.
    pub fn check_against(&self, catalog: &CorpusCatalog) -> Result<()> {
        for r in &self.recipes {
            let mut len = 0;
            for id in &r.recipe.source_ids {
                let e = catalog
                    .get(id)
                    .ok_or_else(|| Error::Catalog(format!("recipe {} uses unknown utterance {id}", r.id)))?;
                if e.split != r.split {
                    return Err(Error::Catalog(format!(
                        "recipe {} ({}) uses {id} from the {} split",
                        r.id,
                        r.split.as_str(),
                        e.split.as_str()
                    )));
                }
                len = len.max(e.num_samples);
            }
            if let (Some(id), Some(off)) = (&r.recipe.noise_id, r.recipe.noise_offset) {
                let n = self
                    .noise(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("recipe {} uses unknown noise {id}", r.id)))?;
                let range = n.bounds.range(r.split);
                if off < range.start || off + len > range.end {
                    return Err(Error::InvalidArgument(format!(
                        "recipe {} noise segment [{off}, {}) leaves the {} partition {range:?}",
                        r.id,
                        off + len,
                        r.split.as_str()
                    )));
                }
            }
        }
        Ok(())
    }

    /// JSON lines: the header, then one recipe per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serialises");
        out.push('\n');
        for r in &self.recipes {
            out.push_str(&serde_json::to_string(r).expect("recipe serialises"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::parse(path, "empty manifest"))?
            .map_err(|e| Error::io(path, e))?;
        let header: ManifestHeader = serde_json::from_str(&first).map_err(|e| Error::parse(path, e))?;
        if header.format != DATASET_MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported dataset manifest {} v{}", header.format, header.version),
            ));
        }
        let mut recipes = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                recipes.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, e))?);
            }
        }
        Ok(Self { header, recipes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_catalog(speakers: usize, utts: usize) -> CorpusCatalog {
        let mut entries = Vec::new();
        for split in Split::ALL {
            let prefix = if split == Split::Test { "t" } else { "s" };
            for s in 0..speakers {
                for u in 0..utts {
                    let speaker_id = format!("{prefix}{s}");
                    entries.push(CatalogEntry {
                        utterance_id: format!("{speaker_id}/{}{u}", split.as_str()),
                        speaker_id,
                        split,
                        path: PathBuf::from("unused.wav"),
                        num_samples: 8000 + 100 * u,
                        sample_rate: 8000,
                    });
                }
            }
        }
        CorpusCatalog {
            root: PathBuf::from("/fake"),
            entries,
        }
    }

    fn fake_noise(id: &str, len: usize) -> NoiseManifest {
        NoiseManifest {
            format: NOISE_MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            id: id.into(),
            kind: NoiseKind::Ssn,
            seed: 0,
            source_corpus: PathBuf::from("/fake"),
            units: 1,
            wav: PathBuf::from("unused.wav"),
            sample_rate: 8000,
            num_samples: len,
            bounds: PartitionBounds::from_ratios(len, (8.0, 1.0, 1.0)).unwrap(),
            checksum: String::new(),
        }
    }

    fn spec(counts: SplitCounts, composition: Composition) -> DatasetSpec {
        DatasetSpec {
            counts,
            composition,
            ..DatasetSpec::desk(vec!["ssn".into(), "bbl".into()], 11)
        }
    }

    fn build(spec: &DatasetSpec) -> DatasetManifest {
        let noises = [fake_noise("ssn", 400_000), fake_noise("bbl", 300_000)];
        build_manifest(&fake_catalog(6, 4), Path::new("c.jsonl"), &noises, spec, StftConfig::default()).unwrap()
    }

    #[test]
    fn combined_dataset_splits_half_and_half() {
        let counts = SplitCounts {
            train: 10,
            validation: 3,
            test: 1,
        };
        let m = build(&spec(counts, Composition::TwoPlusThree));
        let train: Vec<_> = m.in_split(Split::Train).collect();
        assert_eq!(train.len(), 10);
        assert_eq!(train.iter().filter(|r| r.recipe.silent_speaker_present).count(), 5);
        assert_eq!(train.iter().filter(|r| r.recipe.source_ids.len() == 3).count(), 5);
        assert!(m.in_split(Split::Validation).all(|r| r.recipe.output_sources() == 3));
    }

    #[test]
    fn same_seed_same_manifest() {
        let counts = SplitCounts {
            train: 30,
            validation: 5,
            test: 8,
        };
        let s = spec(counts, Composition::TwoSpeaker);
        assert_eq!(build(&s).to_jsonl(), build(&s).to_jsonl());
        let other = DatasetSpec { seed: 12, ..s.clone() };
        assert_ne!(build(&s).to_jsonl(), build(&other).to_jsonl());
    }

    #[test]
    fn training_snrs_are_uniform_on_the_range() {
        let counts = SplitCounts {
            train: 10_000,
            validation: 1,
            test: 1,
        };
        let m = build(&spec(counts, Composition::TwoSpeaker));
        let snrs: Vec<f64> = m.in_split(Split::Train).map(|r| r.recipe.snr_db.unwrap()).collect();
        assert!(snrs.iter().all(|s| (-5.0..=10.0).contains(s)));
        let mean = snrs.iter().sum::<f64>() / snrs.len() as f64;
        // std of the mean is 15/sqrt(12 * 1e4) ~ 0.043
        assert!((mean - 2.5).abs() < 0.2, "{mean}");
    }

    #[test]
    fn test_split_is_balanced_over_noise_and_snr() {
        let counts = SplitCounts {
            train: 1,
            validation: 1,
            test: 16,
        };
        let m = build(&spec(counts, Composition::TwoSpeaker));
        let mut cells: BTreeMap<(String, i64), usize> = BTreeMap::new();
        for r in m.in_split(Split::Test) {
            let key = (r.recipe.noise_id.clone().unwrap(), r.recipe.snr_db.unwrap() as i64);
            *cells.entry(key).or_default() += 1;
        }
        assert_eq!(cells.len(), 8);
        assert!(cells.values().all(|&c| c == 2));
    }

    #[test]
    fn recipes_respect_splits_and_partitions() {
        let counts = SplitCounts {
            train: 200,
            validation: 40,
            test: 40,
        };
        let cat = fake_catalog(6, 4);
        let m = build(&spec(counts, Composition::ThreeSpeaker));
        m.check_against(&cat).unwrap();
        for r in &m.recipes {
            let speakers: std::collections::BTreeSet<_> =
                r.recipe.source_ids.iter().map(|id| &cat.get(id).unwrap().speaker_id).collect();
            assert_eq!(speakers.len(), 3, "speakers must be distinct");
        }

        let mut bad = m.clone();
        let r = bad.recipes.iter_mut().find(|r| r.split == Split::Test).unwrap();
        r.recipe.noise_offset = Some(0);
        assert!(bad.check_against(&cat).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let counts = SplitCounts {
            train: 4,
            validation: 2,
            test: 2,
        };
        let m = build(&spec(counts, Composition::TwoSpeaker));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        m.save(&p).unwrap();
        assert_eq!(DatasetManifest::load(&p).unwrap(), m);
    }

    #[test]
    fn too_few_speakers_is_reported() {
        let noises = [fake_noise("ssn", 400_000), fake_noise("bbl", 300_000)];
        let s = spec(
            SplitCounts {
                train: 2,
                validation: 1,
                test: 1,
            },
            Composition::ThreeSpeaker,
        );
        let err = build_manifest(&fake_catalog(2, 2), Path::new("c"), &noises, &s, StftConfig::default());
        assert!(matches!(err, Err(Error::InsufficientCorpus(_))));
    }
}

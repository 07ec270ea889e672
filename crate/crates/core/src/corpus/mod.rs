//! Corpus catalogs, noise files, mixture manifests and materialised datasets.

mod catalog;
mod checksum;
mod manifest;
mod materialize;
mod synthetic;
mod wav;

pub use catalog::{CatalogEntry, CorpusCatalog, CATALOG_FORMAT, CATALOG_VERSION};
pub use checksum::{checksum_hex, fnv1a64, CHECKSUM_ALGORITHM};
pub use manifest::{
    build_manifest, synthesize_noise, write_noise, Composition, DatasetManifest, DatasetRecipe, DatasetSpec,
    ManifestHeader, NoiseKind, NoiseManifest, SplitCounts, DATASET_MANIFEST_FORMAT, MANIFEST_VERSION,
    NOISE_MANIFEST_FORMAT,
};
pub use materialize::{
    materialize, synthesize_example, DatasetIndex, IndexEntry, INDEX_FILE, INDEX_FORMAT, INDEX_VERSION, STORAGE_PEAK,
};
pub use synthetic::{generate_corpus, SyntheticCorpusSpec};
pub use wav::{
    dequantize, encode_wav_i16, quantize, read_wav, read_wav_i16, write_wav, write_wav_i16, PCM16_SCALE,
};

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty waveform")]
    EmptyWaveform,

    #[error("invalid STFT configuration: {0}")]
    InvalidStftConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("signal too short: {0}")]
    SignalTooShort(String),

    #[error("no active speech in signal")]
    NoActiveSpeech,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("unstable all-pole fit: reflection coefficient {0} has magnitude >= 1")]
    UnstableLpc(f64),

    #[error("permutation search over {0} sources is not supported (at most {max})", max = crate::masks::MAX_SOURCES)]
    TooManySources(usize),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("forward cache does not match the current network parameters")]
    StaleCache,

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unsupported audio format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("corrupt file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    #[error("missing input: {0}")]
    MissingInput(PathBuf),

    #[error("checksum conflict for {path}: recorded {recorded}, computed {computed}")]
    ChecksumConflict {
        path: PathBuf,
        recorded: String,
        computed: String,
    },

    #[error("catalog violation: {0}")]
    Catalog(String),

    #[error("insufficient corpus: {0}")]
    InsufficientCorpus(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.to_string(),
        }
    }
}

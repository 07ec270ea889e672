mod commands;
mod config;
mod error;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::error::CliError;

/// uPIT speech separation pipeline.
///
/// Exit codes: 0 success, 1 failure, 2 usage or configuration error,
/// 3 missing input, 4 non-finite training loss.
#[derive(Debug, Parser)]
#[command(name = "upit", version)]
struct Cli {
    /// Worker threads for data preparation and evaluation (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML file with `preset`, `seed` and one table per subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic speech corpus and its catalog.
    MakeCorpus(MakeCorpusArgs),
    /// Synthesise SSN or babble from a corpus, or import a recorded noise.
    SynthNoise(SynthNoiseArgs),
    /// Sample a dataset manifest and materialise its mixtures.
    MakeMixtures(MakeMixturesArgs),
    /// Train a mask estimator on a materialised dataset.
    Train(TrainArgs),
    /// Separate one mixture file with a trained model.
    Separate(SeparateArgs),
    /// Score a trained model on a dataset split.
    Evaluate(EvaluateArgs),
    /// Score the ideal phase-sensitive filter on a dataset split.
    Oracle(OracleArgs),
    /// Aggregate stored per-utterance results into report tables.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MakeCorpusArgs {
    /// Output directory; receives `<split>/<speaker>/<utt>.wav` and catalog.jsonl.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Start from the noise-source corpus layout instead of the speech layout.
    #[arg(long)]
    #[serde(skip)]
    pub noise_source: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_speakers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_utterances: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_utterances: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_speakers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_utterances: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speaker_prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseType {
    Ssn,
    Bbl,
    Recorded,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthNoiseArgs {
    #[arg(long = "type", value_enum, value_name = "TYPE")]
    #[serde(skip)]
    pub kind: NoiseType,
    /// Source corpus directory (synthesised types).
    #[arg(long, required_if_eq_any([("kind", "ssn"), ("kind", "bbl")]))]
    #[serde(skip)]
    pub corpus: Option<PathBuf>,
    /// Recording to partition (`--type recorded`).
    #[arg(long, required_if_eq("kind", "recorded"))]
    #[serde(skip)]
    pub wav: Option<PathBuf>,
    /// Directory receiving `<id>.wav` and `<id>.json`.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Noise id used by dataset presets; defaults to the type name.
    #[arg(long)]
    #[serde(skip)]
    pub id: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Sentences behind the SSN spectrum.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentences: Option<usize>,
    /// Talker groups in the babble.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    /// SSN length in seconds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_secs: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct MakeMixturesArgs {
    #[arg(long)]
    #[serde(skip)]
    pub preset: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub corpus: PathBuf,
    /// Noise manifests (`<id>.json`), repeatable.
    #[arg(long = "noise")]
    #[serde(skip)]
    pub noises: Vec<PathBuf>,
    /// Dataset directory; receives manifest.jsonl, index.jsonl and the WAVs.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Only write the manifest.
    #[arg(long)]
    #[serde(skip)]
    pub manifest_only: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<usize>,
    /// Noise ids to mix in, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_ids: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_sources: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub preset: Option<String>,
    /// Materialised dataset directory.
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minibatch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Mixture WAV (16-bit mono at the model's sample rate).
    #[arg(long)]
    pub input: PathBuf,
    /// Directory receiving s1.wav .. sN.wav.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for upit::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => upit::Split::Train,
            SplitArg::Validation => upit::Split::Validation,
            SplitArg::Test => upit::Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Column name in reports; defaults to the checkpoint file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub target: EvalTarget,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub target: EvalTarget,
}

#[derive(Debug, Args)]
pub struct EvalTarget {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Per-utterance results as JSON lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the aggregate tables as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result files written by `evaluate` or `oracle`.
    #[arg(long = "results", required = true, num_args = 1..)]
    pub results: Vec<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let config = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::MakeCorpus(a) => commands::make_corpus(&a, &config),
        Command::SynthNoise(a) => commands::synth_noise(&a, &config),
        Command::MakeMixtures(a) => commands::make_mixtures(&a, &config),
        Command::Train(a) => commands::train(&a, &config),
        Command::Separate(a) => commands::separate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("upit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

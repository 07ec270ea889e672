//! Desk-scale experiment: synthetic corpus, SSN and babble, 200 training
//! mixtures, a 2 x 64 network trained for up to 50 epochs, then SDR and ESTOI
//! tables for the model and the IPSF oracle.
//!
//! cargo run --release -p upit --example desk_experiment -- [seed] [workdir]

use std::path::{Path, PathBuf};
use std::time::Instant;

use upit::corpus::{build_manifest, generate_corpus, materialize, DatasetSpec, NoiseKind, SyntheticCorpusSpec};
use upit::dsp::StftConfig;
use upit::experiment::{evaluate_examples, load_examples, synth_noise_file, training_set, NoiseSynthSpec, Separator};
use upit::metrics::{aggregate, render_text};
use upit::model::{train, BlstmConfig, BlstmNetwork, TrainSchedule};
use upit::Split;

fn main() -> upit::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed must be an integer"));
    let tmp;
    let root: PathBuf = match args.next() {
        Some(p) => PathBuf::from(p),
        None => {
            tmp = tempfile::tempdir().expect("temporary directory");
            tmp.path().to_path_buf()
        }
    };
    let start = Instant::now();
    let stft = StftConfig::default();

    let catalog = generate_corpus(&root.join("speech"), &SyntheticCorpusSpec::desk(seed))?;
    let source = generate_corpus(&root.join("noise_src"), &SyntheticCorpusSpec::desk_noise_source(seed + 1000))?;
    let ns = NoiseSynthSpec::default();
    let noises = vec![
        synth_noise_file(&source, NoiseKind::Ssn, "ssn", &ns, seed, &root.join("noise"))?,
        synth_noise_file(&source, NoiseKind::Bbl, "bbl", &ns, seed, &root.join("noise"))?,
    ];
    let spec = DatasetSpec::desk(vec!["ssn".into(), "bbl".into()], seed);
    let manifest = build_manifest(&catalog, Path::new("catalog.jsonl"), &noises, &spec, stft)?;
    let index = materialize(&manifest, &catalog, &root.join("data"))?;
    let train_set = training_set(&load_examples(&index, Split::Train)?, &stft)?;
    let cv_set = training_set(&load_examples(&index, Split::Validation)?, &stft)?;
    let test = load_examples(&index, Split::Test)?;
    eprintln!("data ready in {:.1} s", start.elapsed().as_secs_f64());

    let mut net = BlstmNetwork::new(BlstmConfig::desk(), seed)?;
    let schedule = TrainSchedule { seed, ..TrainSchedule::desk() };
    let history = train(&mut net, &train_set, &cv_set, &schedule, |e| {
        eprintln!(
            "epoch {:3} lr {:.2e} train {:.5} cv {:.5}",
            e.epoch,
            e.learning_rate,
            e.train_loss,
            e.validation_loss.unwrap_or(f64::NAN)
        )
    })?;
    let losses = history.train_losses();
    eprintln!("final/first training loss {:.3}", losses[losses.len() - 1] / losses[0]);

    let mut results = evaluate_examples(&test, Separator::Network(&net), "desk", &stft)?;
    results.extend(evaluate_examples(&test, Separator::Oracle, "", &stft)?);
    println!("{}", render_text(&aggregate(&results)?));
    eprintln!("total {:.0} s", start.elapsed().as_secs_f64());
    Ok(())
}

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use upit::corpus::{
    build_manifest, generate_corpus, materialize, write_wav, Composition, CorpusCatalog, DatasetIndex, DatasetSpec,
    NoiseKind, NoiseManifest, SplitCounts, SyntheticCorpusSpec,
};
use upit::dsp::StftConfig;
use upit::experiment::{
    evaluate_examples, import_noise_file, load_examples, synth_noise_file, training_set, NoiseSynthSpec, Separator,
};
use upit::metrics::{aggregate, render_csv, render_text, EvalResult};
use upit::model::{load_checkpoint, save_checkpoint, separate as separate_mixture, BlstmConfig, BlstmNetwork, Checkpoint, TrainSchedule};
use upit::Split;

use crate::config::{resolve, ConfigFile};
use crate::error::CliError;
use crate::presets::Preset;
use crate::{EvalTarget, EvaluateArgs, MakeCorpusArgs, MakeMixturesArgs, NoiseType, OracleArgs, ReportArgs, SeparateArgs, SynthNoiseArgs, TrainArgs};

pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

fn preset(flag: Option<&str>, config: &ConfigFile) -> Result<Preset, CliError> {
    flag.or(config.preset())
        .unwrap_or("desk")
        .parse()
        .map_err(CliError::Usage)
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::from_io(p, e))
}

fn create_dir(p: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(p).map_err(|e| CliError::from_io(p, e))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("summary serialises"));
}

/// A catalog.jsonl inside `dir` wins over scanning the directory.
fn open_corpus(dir: &Path) -> Result<CorpusCatalog, CliError> {
    let dir = absolute(dir)?;
    let file = dir.join(CATALOG_FILE);
    if file.is_file() {
        return Ok(CorpusCatalog::load_from(&file)?);
    }
    Ok(CorpusCatalog::scan(&dir)?)
}

pub fn make_corpus(args: &MakeCorpusArgs, config: &ConfigFile) -> Result<(), CliError> {
    let defaults = if args.noise_source {
        SyntheticCorpusSpec::desk_noise_source(0)
    } else {
        SyntheticCorpusSpec::desk(0)
    };
    let spec = resolve(defaults, config, "make-corpus", args)?;
    let out = absolute(&args.out)?;
    create_dir(&out)?;
    info!("generating corpus in {}", out.display());
    let catalog = generate_corpus(&out, &spec)?;
    catalog.save(&out.join(CATALOG_FILE))?;
    print_json(&serde_json::json!({
        "catalog": out.join(CATALOG_FILE),
        "utterances": catalog.entries.len(),
        "spec": spec,
    }));
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSettings {
    seed: u64,
    sentences: usize,
    groups: usize,
    duration_secs: f64,
    ratios: (f64, f64, f64),
}

pub fn synth_noise(args: &SynthNoiseArgs, config: &ConfigFile) -> Result<(), CliError> {
    let d = NoiseSynthSpec::default();
    let defaults = NoiseSettings {
        seed: 0,
        sentences: d.ssn_sentences,
        groups: d.bbl_groups,
        duration_secs: d.ssn_duration_secs,
        ratios: d.ratios,
    };
    let s = resolve(defaults, config, "synth-noise", args)?;
    let spec = NoiseSynthSpec {
        ssn_sentences: s.sentences,
        ssn_duration_secs: s.duration_secs,
        bbl_groups: s.groups,
        ratios: s.ratios,
    };
    let kind = match args.kind {
        NoiseType::Ssn => NoiseKind::Ssn,
        NoiseType::Bbl => NoiseKind::Bbl,
        NoiseType::Recorded => NoiseKind::Recorded,
    };
    let id = args.id.clone().unwrap_or_else(|| kind.as_str().to_string());
    let out = absolute(&args.out)?;
    let manifest = match (kind, &args.corpus, &args.wav) {
        (NoiseKind::Recorded, _, Some(wav)) => import_noise_file(&absolute(wav)?, &id, spec.ratios, &out)?,
        (_, Some(corpus), _) => {
            let catalog = open_corpus(corpus)?;
            info!("synthesising {} from {} utterances", kind.as_str(), catalog.entries.len());
            synth_noise_file(&catalog, kind, &id, &spec, s.seed, &out)?
        }
        _ => return Err(CliError::Usage("--corpus or --wav is required".into())),
    };
    print_json(&manifest);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureSettings {
    seed: u64,
    train: usize,
    validation: usize,
    test: usize,
    noise_ids: Option<Vec<String>>,
    output_sources: usize,
    composition: Composition,
    train_snr_db: (f64, f64),
    test_snrs_db: Vec<f64>,
    level_offset_db: (f64, f64),
}

pub fn make_mixtures(args: &MakeMixturesArgs, config: &ConfigFile) -> Result<(), CliError> {
    let preset = preset(args.preset.as_deref(), config)?;
    let base = DatasetSpec::desk(Vec::new(), 0);
    let (train, validation, test) = preset.counts();
    let defaults = MixtureSettings {
        seed: 0,
        train,
        validation,
        test,
        noise_ids: preset.noise_ids(),
        output_sources: 3,
        composition: preset.composition(),
        train_snr_db: base.train_snr_db,
        test_snrs_db: base.test_snrs_db,
        level_offset_db: base.level_offset_db,
    };
    let s = resolve(defaults, config, "make-mixtures", args)?;

    let catalog = open_corpus(&args.corpus)?;
    let noises = args
        .noises
        .iter()
        .map(|p| NoiseManifest::load(&absolute(p)?).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let noise_ids = s
        .noise_ids
        .clone()
        .unwrap_or_else(|| noises.iter().map(|n| n.id.clone()).collect());
    let spec = DatasetSpec {
        name: preset.to_string(),
        composition: s.composition,
        counts: SplitCounts {
            train: s.train,
            validation: s.validation,
            test: s.test,
        },
        output_sources: s.output_sources,
        noise_ids,
        train_snr_db: s.train_snr_db,
        test_snrs_db: s.test_snrs_db.clone(),
        level_offset_db: s.level_offset_db,
        seed: s.seed,
    };
    let mut manifest = build_manifest(
        &catalog,
        &catalog.root.join(CATALOG_FILE),
        &noises,
        &spec,
        StftConfig::default(),
    )?;
    let provenance = &mut manifest.header.provenance;
    provenance.insert("command".into(), "make-mixtures".into());
    provenance.insert("preset".into(), preset.to_string());
    provenance.insert(
        "effective_config".into(),
        serde_json::to_string(&s).expect("settings serialise"),
    );

    let out = absolute(&args.out)?;
    create_dir(&out)?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    info!("{} recipes ({})", manifest.recipes.len(), manifest.header.composition_rule);
    let materialised = if args.manifest_only {
        0
    } else {
        materialize(&manifest, &catalog, &out)?.entries.len()
    };
    print_json(&serde_json::json!({
        "manifest": out.join(MANIFEST_FILE),
        "recipes": manifest.recipes.len(),
        "materialised": materialised,
        "composition_rule": manifest.header.composition_rule,
    }));
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSettings {
    seed: u64,
    epochs: usize,
    lr: f64,
    lr_decay: f64,
    lr_floor: f64,
    momentum: f64,
    /// 0 disables clipping.
    clip_norm: f64,
    minibatch: usize,
    layers: usize,
    cells: usize,
    dropout: f64,
}

impl TrainSettings {
    fn from_preset(p: Preset) -> Self {
        let s = p.schedule();
        let n = p.network();
        Self {
            seed: s.seed,
            epochs: s.max_epochs,
            lr: s.lr_initial,
            lr_decay: s.lr_decay,
            lr_floor: s.lr_floor,
            momentum: s.momentum,
            clip_norm: s.clip_norm.unwrap_or(0.0),
            minibatch: s.minibatch_utterances,
            layers: n.num_layers,
            cells: n.cells_per_direction,
            dropout: n.dropout_rate,
        }
    }

    fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            lr_initial: self.lr,
            lr_decay: self.lr_decay,
            lr_floor: self.lr_floor,
            max_epochs: self.epochs,
            minibatch_utterances: self.minibatch,
            seed: self.seed,
            momentum: self.momentum,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
        }
    }

    fn network(&self, base: BlstmConfig) -> BlstmConfig {
        BlstmConfig {
            num_layers: self.layers,
            cells_per_direction: self.cells,
            dropout_rate: self.dropout,
            ..base
        }
    }
}

fn open_dataset(dir: &Path) -> Result<(DatasetIndex, StftConfig), CliError> {
    let dir = absolute(dir)?;
    let index = DatasetIndex::load(&dir)?;
    let manifest = dir.join(MANIFEST_FILE);
    let stft = if manifest.is_file() {
        upit::corpus::DatasetManifest::load(&manifest)?.header.stft
    } else {
        StftConfig::default()
    };
    Ok((index, stft))
}

pub fn train(args: &TrainArgs, config: &ConfigFile) -> Result<(), CliError> {
    let preset = preset(args.preset.as_deref(), config)?;
    let s = resolve(TrainSettings::from_preset(preset), config, "train", args)?;
    let schedule = s.schedule();
    let net_cfg = s.network(preset.network());
    schedule.validate()?;
    net_cfg.validate()?;

    let (index, stft) = open_dataset(&args.data)?;
    let train_set = training_set(&load_examples(&index, Split::Train)?, &stft)?;
    let validation_set = match load_examples(&index, Split::Validation) {
        Ok(v) => training_set(&v, &stft)?,
        Err(upit::Error::EmptyDataset) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let out_sources = train_set[0].targets.len();
    let net_cfg = BlstmConfig {
        output_sources: out_sources,
        input_dim: stft.num_bins(),
        output_dim_per_source: stft.num_bins(),
        ..net_cfg
    };
    info!(
        "training {} parameters on {} utterances ({} validation)",
        net_cfg.parameter_count(),
        train_set.len(),
        validation_set.len()
    );
    let mut net = BlstmNetwork::new(net_cfg, s.seed)?;
    let history = upit::model::train(&mut net, &train_set, &validation_set, &schedule, |r| {
        info!(
            "epoch {:3}  lr {:.3e}  train {:.6}  validation {}",
            r.epoch,
            r.learning_rate,
            r.train_loss,
            r.validation_loss.map_or("-".into(), |v| format!("{v:.6}"))
        );
    })?;
    let ckpt = Checkpoint {
        network: net,
        stft,
        schedule: Some(schedule),
        history: Some(history.clone()),
    };
    save_checkpoint(&absolute(&args.out)?, &ckpt)?;
    print_json(&serde_json::json!({
        "checkpoint": args.out,
        "preset": preset.to_string(),
        "effective_config": s,
        "history": history,
    }));
    Ok(())
}

pub fn separate(args: &SeparateArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&args.model)?;
    let mixture = upit::corpus::read_wav(&args.input)?;
    let outputs = separate_mixture(&ckpt.network, &mixture, &ckpt.stft)?;
    create_dir(&args.out)?;
    let mut written = Vec::new();
    for (i, w) in outputs.iter().enumerate() {
        let p = args.out.join(format!("s{}.wav", i + 1));
        write_wav(w, &p)?;
        written.push(p);
    }
    print_json(&serde_json::json!({ "outputs": written }));
    Ok(())
}

fn write_results(target: &EvalTarget, results: &[EvalResult]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in results {
        text.push_str(&serde_json::to_string(r).expect("result serialises"));
        text.push('\n');
    }
    std::fs::write(&target.out, text).map_err(|e| CliError::from_io(&target.out, e))?;
    emit_report(results, target.csv.as_deref())
}

fn emit_report(results: &[EvalResult], csv: Option<&Path>) -> Result<(), CliError> {
    let tables = aggregate(results)?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(render_text(&tables).as_bytes());
    if let Some(path) = csv {
        std::fs::write(path, render_csv(&tables)).map_err(|e| CliError::from_io(path, e))?;
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&args.model)?;
    let name = args.name.clone().unwrap_or_else(|| {
        args.model
            .file_stem()
            .map_or("model".into(), |s| s.to_string_lossy().into_owned())
    });
    let (index, _) = open_dataset(&args.target.data)?;
    let examples = load_examples(&index, args.target.split.into())?;
    info!("evaluating {name} on {} mixtures", examples.len());
    let results = evaluate_examples(&examples, Separator::Network(&ckpt.network), &name, &ckpt.stft)?;
    write_results(&args.target, &results)
}

pub fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    let (index, stft) = open_dataset(&args.target.data)?;
    let examples = load_examples(&index, args.target.split.into())?;
    info!("oracle masking on {} mixtures", examples.len());
    let results = evaluate_examples(&examples, Separator::Oracle, "", &stft)?;
    write_results(&args.target, &results)
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let mut results = Vec::new();
    // identical (model, utterance) pairs from several files are kept once
    let mut seen = BTreeMap::new();
    for path in &args.results {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: EvalResult = serde_json::from_str(line).map_err(|e| {
                CliError::Core(upit::Error::Parse {
                    path: path.clone(),
                    detail: format!("line {}: {e}", n + 1),
                })
            })?;
            if seen.insert((r.model.clone(), r.utterance_id.clone()), ()).is_none() {
                results.push(r);
            }
        }
    }
    emit_report(&results, args.csv.as_deref())
}

//! Command implementations.
//!
//! Every command applies its flag overrides to the run configuration,
//! creates the output directory, writes the resolved-config snapshot,
//! and only then does its work, so a failed run still leaves behind the
//! configuration that produced it.

use std::path::{Path, PathBuf};

use clap::Args;

use relkit::augment::{augment, write_manifest, AugmentTarget, RotationParaphraser};
use relkit::crosslingual::{
    translate_dataset_with, HttpTranslationClient, IdentityClient, TranslationCache,
    TranslationClient,
};
use relkit::data::{
    compute_stats, import_semrel, parse_dataset, read_dataset, split, write_dataset, SplitName,
};
use relkit::encoder::{
    tokenizer_from_identifier, HashTokenizer, PairTokenizer, RegressionModel,
};
use relkit::metrics::{evaluate, PredictionSet};
use relkit::training::{load_checkpoint, save_checkpoint, train};
use relkit::{Error, Result};

use crate::config::RunConfig;
use crate::report::{self, PredictionRow};

/// Creates the run directory and records the effective configuration.
fn prepare_out_dir(config: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&config.out_dir)?;
    config.write_snapshot(&config.out_dir)?;
    Ok(config.out_dir.clone())
}

fn open_input(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("cannot open {}: {e}", path.display())))?;
    Ok(std::io::BufReader::new(file))
}

/// Loads a checkpoint and rebuilds its tokenizer, rejecting a vocabulary
/// mismatch between the two.
fn load_model(checkpoint: &Path) -> Result<(RegressionModel, HashTokenizer)> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let tokenizer = tokenizer_from_identifier(&meta.tokenizer)?;
    if tokenizer.vocab_size() != model.config().vocab_size {
        return Err(Error::Checkpoint(format!(
            "tokenizer vocabulary {} does not match model vocabulary {}",
            tokenizer.vocab_size(),
            model.config().vocab_size
        )));
    }
    Ok((model, tokenizer))
}

fn parse_target(raw: &str) -> Result<AugmentTarget> {
    match raw {
        "first" => Ok(AugmentTarget::First),
        "second" => Ok(AugmentTarget::Second),
        "both-independently" => Ok(AugmentTarget::BothIndependently),
        other => Err(Error::Config(format!(
            "unknown augmentation target {other:?}; expected first, second, or both-independently"
        ))),
    }
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Source CSV file
    pub input: PathBuf,
    /// Input layout: semrel (PairID,Text,Score) or canonical
    #[arg(long, default_value = "semrel")]
    pub format: String,
    /// Language tag recorded on the dataset
    #[arg(long)]
    pub language: Option<String>,
    /// Split label recorded on the dataset
    #[arg(long, default_value = "unsplit")]
    pub split: String,
    /// Output file (default: <out>/imported.csv)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn import(config: &mut RunConfig, args: &ImportArgs) -> Result<()> {
    if let Some(language) = &args.language {
        config.data.language = Some(language.clone());
    }
    let out_dir = prepare_out_dir(config)?;
    let language = config.data.language().to_string();
    let split_name: SplitName = args.split.parse()?;
    let reader = open_input(&args.input)?;
    let dataset = match args.format.as_str() {
        "semrel" => import_semrel(reader, &language, split_name)?,
        "canonical" => parse_dataset(reader, &language, split_name)?,
        other => {
            return Err(Error::Config(format!(
                "unknown import format {other:?}; expected semrel or canonical"
            )))
        }
    };
    let output = args
        .output
        .clone()
        .unwrap_or_else(|| out_dir.join("imported.csv"));
    write_dataset(&dataset, &output)?;
    println!("imported {} pairs into {}", dataset.len(), output.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Canonical CSV file
    pub input: PathBuf,
    /// Language tag recorded on the dataset
    #[arg(long)]
    pub language: Option<String>,
    /// Split label recorded on the dataset
    #[arg(long, default_value = "unsplit")]
    pub split: String,
}

pub fn stats(config: &mut RunConfig, args: &StatsArgs) -> Result<()> {
    if let Some(language) = &args.language {
        config.data.language = Some(language.clone());
    }
    let out_dir = prepare_out_dir(config)?;
    let split_name: SplitName = args.split.parse()?;
    let dataset = read_dataset(&args.input, config.data.language(), split_name)?;
    let stats = compute_stats(&dataset)?;
    let rendered = serde_json::to_string_pretty(&stats)
        .map_err(|e| Error::Report(format!("cannot serialize stats: {e}")))?;
    std::fs::write(out_dir.join("stats.json"), rendered)?;
    println!("count = {}", stats.count);
    println!("mean_score = {}", stats.mean_score);
    println!("std_score = {}", stats.std_score);
    println!("min_score = {}", stats.min_score);
    println!("max_score = {}", stats.max_score);
    println!("histogram:");
    for (bin, count) in stats.histogram.iter().enumerate() {
        let lo = bin as f64 / 10.0;
        let closing = if bin == stats.histogram.len() - 1 { ']' } else { ')' };
        println!("  [{lo:.1},{:.1}{closing} {count}", lo + 0.1);
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV (canonical layout)
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dev CSV; when absent, the training file is split
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Train share of the split used when --dev is absent
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Continue from an existing checkpoint instead of a fresh model
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

pub fn train_cmd(config: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(path) = &args.train {
        config.data.train = Some(path.clone());
    }
    if let Some(path) = &args.dev {
        config.data.dev = Some(path.clone());
    }
    if let Some(fraction) = args.train_fraction {
        config.data.train_fraction = Some(fraction);
    }
    if let Some(lr) = args.lr {
        config.training.learning_rate = lr;
    }
    if let Some(dropout) = args.dropout {
        config.training.dropout_rate = dropout;
    }
    if let Some(batch_size) = args.batch_size {
        config.training.batch_size = batch_size;
    }
    if let Some(max_tokens) = args.max_tokens {
        config.training.max_tokens = max_tokens;
    }
    if let Some(weight_decay) = args.weight_decay {
        config.training.weight_decay = weight_decay;
    }
    if let Some(epochs) = args.epochs {
        config.training.epochs = epochs;
    }
    let out_dir = prepare_out_dir(config)?;

    let train_path = config.data.train.clone().ok_or_else(|| {
        Error::Config("no training data: set data.train in the config or pass --train".into())
    })?;
    let language = config.data.language().to_string();
    let train_full = read_dataset(&train_path, &language, SplitName::Train)?;
    let (train_set, dev_set) = match &config.data.dev {
        Some(dev_path) => (
            train_full,
            read_dataset(dev_path, &language, SplitName::Dev)?,
        ),
        None => split(&train_full, config.data.train_fraction(), config.seed)?,
    };

    let (model, tokenizer) = match &args.init_from {
        Some(checkpoint) => load_model(checkpoint)?,
        None => {
            let encoder_config = config.model.encoder_config()?;
            let tokenizer = HashTokenizer::new(encoder_config.vocab_size)?;
            (
                RegressionModel::new(encoder_config, config.seed)?,
                tokenizer,
            )
        }
    };
    let training_config = config.training.training_config(config.seed);
    let (best, log) = train(model, &tokenizer, &train_set, &dev_set, &training_config)?;

    let checkpoint_dir = out_dir.join("checkpoint");
    save_checkpoint(&best, &tokenizer.identifier(), Some(&log), &checkpoint_dir)?;
    let mut jsonl = String::new();
    for record in &log.epochs {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Training(format!("cannot serialize epoch record: {e}")))?;
        jsonl.push_str(&line);
        jsonl.push('\n');
    }
    std::fs::write(out_dir.join("log.jsonl"), jsonl)?;

    for record in &log.epochs {
        let dev_spearman = record
            .dev_spearman
            .map(|s| format!("{s:.4}"))
            .unwrap_or_else(|| "undefined".into());
        println!(
            "epoch {}: train_loss={:.6} dev_mse={:.6} dev_spearman={dev_spearman}",
            record.epoch, record.train_loss, record.dev_mse
        );
    }
    println!(
        "selected epoch {}; checkpoint written to {}",
        log.selected_epoch,
        checkpoint_dir.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labeled canonical CSV to score
    pub data: Option<PathBuf>,
    /// Checkpoint directory produced by train
    #[arg(long)]
    pub checkpoint: PathBuf,
}

pub fn evaluate_cmd(config: &mut RunConfig, args: &EvaluateArgs) -> Result<()> {
    if let Some(path) = &args.data {
        config.data.eval = Some(path.clone());
    }
    let out_dir = prepare_out_dir(config)?;
    let data_path = config.data.eval.clone().ok_or_else(|| {
        Error::Config("no evaluation data: set data.eval in the config or pass a file".into())
    })?;
    let (model, tokenizer) = load_model(&args.checkpoint)?;
    let dataset = read_dataset(&data_path, config.data.language(), SplitName::Test)?;
    let labels = dataset.scores()?;
    let predictions = model.predict(
        &tokenizer,
        dataset.pairs(),
        config.training.max_tokens,
        config.training.batch_size,
    )?;
    let report = evaluate(&PredictionSet::new(labels.clone(), predictions.clone())?)?;
    std::fs::write(out_dir.join("evaluation.txt"), report.to_text())?;
    let rows: Vec<PredictionRow> = dataset
        .pairs()
        .iter()
        .zip(&predictions)
        .map(|(pair, prediction)| PredictionRow {
            pair_id: pair.pair_id.clone(),
            label: pair.score,
            prediction: *prediction,
        })
        .collect();
    report::write_predictions_csv(&rows, &out_dir.join("predictions.csv"))?;
    print!("{}", report.to_text());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Canonical CSV to score; labels are optional
    pub data: Option<PathBuf>,
    /// Checkpoint directory produced by train
    #[arg(long)]
    pub checkpoint: PathBuf,
}

pub fn predict_cmd(config: &mut RunConfig, args: &PredictArgs) -> Result<()> {
    if let Some(path) = &args.data {
        config.data.eval = Some(path.clone());
    }
    let out_dir = prepare_out_dir(config)?;
    let data_path = config.data.eval.clone().ok_or_else(|| {
        Error::Config("no input data: set data.eval in the config or pass a file".into())
    })?;
    let (model, tokenizer) = load_model(&args.checkpoint)?;
    let dataset = read_dataset(&data_path, config.data.language(), SplitName::Test)?;
    let predictions = model.predict(
        &tokenizer,
        dataset.pairs(),
        config.training.max_tokens,
        config.training.batch_size,
    )?;
    let rows: Vec<PredictionRow> = dataset
        .pairs()
        .iter()
        .zip(&predictions)
        .map(|(pair, prediction)| PredictionRow {
            pair_id: pair.pair_id.clone(),
            label: pair.score,
            prediction: *prediction,
        })
        .collect();
    let output = out_dir.join("predictions.csv");
    report::write_predictions_csv(&rows, &output)?;
    println!("wrote {} predictions to {}", rows.len(), output.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Training CSV to expand (canonical layout)
    pub train: Option<PathBuf>,
    /// Paraphrased copies per pair
    #[arg(long)]
    pub copies: Option<usize>,
    /// Which sentence to paraphrase: first, second, or both-independently
    #[arg(long)]
    pub target: Option<String>,
    /// Drop copies identical to an existing pair
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dedup: Option<bool>,
}

pub fn augment_cmd(config: &mut RunConfig, args: &AugmentArgs) -> Result<()> {
    if let Some(path) = &args.train {
        config.data.train = Some(path.clone());
    }
    if let Some(copies) = args.copies {
        config.augment.copies_per_pair = copies;
    }
    if let Some(target) = &args.target {
        config.augment.target = parse_target(target)?;
    }
    if let Some(dedup) = args.dedup {
        config.augment.dedup = dedup;
    }
    let out_dir = prepare_out_dir(config)?;
    let train_path = config.data.train.clone().ok_or_else(|| {
        Error::Config("no training data: set data.train in the config or pass a file".into())
    })?;
    let dataset = read_dataset(&train_path, config.data.language(), SplitName::Train)?;
    let (augmented, manifest) = augment(&dataset, &RotationParaphraser, &config.augment.policy())?;
    let output = out_dir.join("augmented.csv");
    write_dataset(&augmented, &output)?;
    let manifest_path = out_dir.join("manifest.jsonl");
    let file = std::fs::File::create(&manifest_path)?;
    write_manifest(&manifest, std::io::BufWriter::new(file))?;
    println!(
        "augmented {} pairs to {} ({} generated); manifest in {}",
        dataset.len(),
        augmented.len(),
        manifest.len(),
        manifest_path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct XevalArgs {
    /// Labeled canonical CSV in the source language
    pub data: Option<PathBuf>,
    /// Checkpoint directory produced by train
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Translation client: identity or http
    #[arg(long)]
    pub client: Option<String>,
    /// Endpoint URL for the http client
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub api_key: Option<String>,
    /// Language the model was trained on
    #[arg(long)]
    pub target_language: Option<String>,
    /// Translation cache file
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

pub fn xeval_cmd(config: &mut RunConfig, args: &XevalArgs) -> Result<()> {
    if let Some(path) = &args.data {
        config.data.eval = Some(path.clone());
    }
    if let Some(client) = &args.client {
        config.translation.client = client.clone();
    }
    if let Some(endpoint) = &args.endpoint {
        config.translation.endpoint = Some(endpoint.clone());
    }
    if let Some(api_key) = &args.api_key {
        config.translation.api_key = Some(api_key.clone());
    }
    if let Some(target) = &args.target_language {
        config.translation.target_language = target.clone();
    }
    if let Some(cache) = &args.cache {
        config.translation.cache = Some(cache.clone());
    }
    let out_dir = prepare_out_dir(config)?;
    let data_path = config.data.eval.clone().ok_or_else(|| {
        Error::Config("no evaluation data: set data.eval in the config or pass a file".into())
    })?;
    let (model, tokenizer) = load_model(&args.checkpoint)?;
    let dataset = read_dataset(&data_path, config.data.language(), SplitName::Test)?;
    let labels = dataset.scores()?;

    let client: Box<dyn TranslationClient> = match config.translation.client.as_str() {
        "identity" => Box::new(IdentityClient),
        "http" => {
            let endpoint = config.translation.endpoint.as_deref().ok_or_else(|| {
                Error::Config("http translation client needs an endpoint".into())
            })?;
            let mut http = HttpTranslationClient::new(endpoint)?;
            if let Some(api_key) = &config.translation.api_key {
                http = http.with_api_key(api_key);
            }
            Box::new(http)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown translation client {other:?}; expected identity or http"
            )))
        }
    };
    let mut cache = TranslationCache::open(config.translation.cache_path(&out_dir))?;
    let translated = translate_dataset_with(
        &dataset,
        client.as_ref(),
        &mut cache,
        &config.translation.target_language,
        &config.translation.options(),
    )?;
    write_dataset(&translated, &out_dir.join("translated.csv"))?;

    let predictions = model.predict(
        &tokenizer,
        translated.pairs(),
        config.training.max_tokens,
        config.training.batch_size,
    )?;
    let report = evaluate(&PredictionSet::new(labels.clone(), predictions.clone())?)?;
    std::fs::write(out_dir.join("evaluation.txt"), report.to_text())?;
    let rows: Vec<PredictionRow> = translated
        .pairs()
        .iter()
        .zip(&predictions)
        .map(|(pair, prediction)| PredictionRow {
            pair_id: pair.pair_id.clone(),
            label: pair.score,
            prediction: *prediction,
        })
        .collect();
    report::write_predictions_csv(&rows, &out_dir.join("predictions.csv"))?;
    print!("{}", report.to_text());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Predictions CSV (pair_id,label,prediction)
    pub predictions: PathBuf,
}

pub fn report_cmd(config: &mut RunConfig, args: &ReportArgs) -> Result<()> {
    let out_dir = prepare_out_dir(config)?;
    let rows = report::read_predictions_csv(&args.predictions)?;
    let written = report::emit_report(&rows, &out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

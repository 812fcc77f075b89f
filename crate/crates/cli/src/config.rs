//! Run configuration.
//!
//! One TOML file drives every command; command-line flags override
//! individual fields. After overrides are applied, the effective
//! configuration is written into the run directory as
//! `config.resolved.toml`, and replaying a command with that snapshot
//! (and no extra flags) reproduces the run.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use relkit::augment::{AugmentTarget, AugmentationPolicy};
use relkit::crosslingual::TranslationOptions;
use relkit::encoder::EncoderConfig;
use relkit::training::TrainingConfig;
use relkit::{Error, Result};

/// Name of the snapshot file written into every run directory.
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random choice in a run derives from it.
    pub seed: u64,
    /// Directory receiving all outputs of the run.
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub augment: AugmentSection,
    pub translation: TranslationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("run"),
            data: DataSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            augment: AugmentSection::default(),
            translation: TranslationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Canonical training CSV.
    pub train: Option<PathBuf>,
    /// Canonical dev CSV; when absent, `train` is split per
    /// `train_fraction`.
    pub dev: Option<PathBuf>,
    /// Canonical CSV scored by evaluate, predict, and xeval.
    pub eval: Option<PathBuf>,
    /// Language tag attached to loaded datasets.
    pub language: Option<String>,
    /// Train share used when `dev` is absent.
    pub train_fraction: Option<f64>,
}

impl DataSection {
    pub fn language(&self) -> &str {
        self.language.as_deref().unwrap_or("eng")
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction.unwrap_or(0.8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// `tiny` (2 layers, hidden 32) or `base` (12 layers, hidden 768).
    pub preset: String,
    pub vocab_size: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "tiny".into(),
            vocab_size: None,
        }
    }
}

impl ModelSection {
    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        match self.preset.as_str() {
            "tiny" => Ok(EncoderConfig::tiny(self.vocab_size.unwrap_or(4096))),
            "base" => Ok(EncoderConfig::base(self.vocab_size.unwrap_or(50000))),
            other => Err(Error::Config(format!(
                "unknown model preset {other:?}; expected tiny or base"
            ))),
        }
    }
}

/// Mirrors the trainer's own configuration, minus the seed (held at the
/// top level of [`RunConfig`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub max_tokens: usize,
    pub weight_decay: f64,
    pub epochs: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let defaults = TrainingConfig::default();
        Self {
            learning_rate: defaults.learning_rate,
            dropout_rate: defaults.dropout_rate,
            batch_size: defaults.batch_size,
            max_tokens: defaults.max_tokens,
            weight_decay: defaults.weight_decay,
            epochs: defaults.epochs,
        }
    }
}

impl TrainingSection {
    pub fn training_config(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            dropout_rate: self.dropout_rate,
            batch_size: self.batch_size,
            max_tokens: self.max_tokens,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub copies_per_pair: usize,
    pub target: AugmentTarget,
    pub dedup: bool,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let policy = AugmentationPolicy::default();
        Self {
            copies_per_pair: policy.copies_per_pair,
            target: policy.target,
            dedup: policy.dedup,
        }
    }
}

impl AugmentSection {
    pub fn policy(&self) -> AugmentationPolicy {
        AugmentationPolicy {
            copies_per_pair: self.copies_per_pair,
            target: self.target,
            dedup: self.dedup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslationSection {
    /// `identity` (no-op, for pipelines already in the target language)
    /// or `http` (remote endpoint).
    pub client: String,
    /// Required for the `http` client.
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub target_language: String,
    /// Response cache location; defaults to `translations.cache` inside
    /// the run directory.
    pub cache: Option<PathBuf>,
    pub max_attempts: usize,
    pub initial_backoff_ms: u64,
    pub concurrency: usize,
}

impl Default for TranslationSection {
    fn default() -> Self {
        let options = TranslationOptions::default();
        Self {
            client: "http".into(),
            endpoint: None,
            api_key: None,
            target_language: "eng".into(),
            cache: None,
            max_attempts: options.max_attempts,
            initial_backoff_ms: options.initial_backoff.as_millis() as u64,
            concurrency: options.concurrency,
        }
    }
}

impl TranslationSection {
    pub fn options(&self) -> TranslationOptions {
        TranslationOptions {
            max_attempts: self.max_attempts,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            concurrency: self.concurrency,
        }
    }

    pub fn cache_path(&self, out_dir: &Path) -> PathBuf {
        self.cache
            .clone()
            .unwrap_or_else(|| out_dir.join("translations.cache"))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&raw)
            .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
    }

    /// Writes the effective configuration into `out_dir`. The run
    /// directory must already exist.
    pub fn write_snapshot(&self, out_dir: &Path) -> Result<PathBuf> {
        let rendered = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize resolved config: {e}")))?;
        let path = out_dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, rendered)?;
        Ok(path)
    }
}

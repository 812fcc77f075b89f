//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the toolkit.
///
/// Variants carry enough context to locate the offending input: CSV errors
/// name the line, pair-level errors name the `pair_id`, metric errors name
/// the metric.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed CSV input (syntax, wrong column count, bad header).
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// A pair violated a field invariant (score range, empty sentence,
    /// duplicate id).
    #[error("invalid pair {pair_id}: {message}")]
    InvalidPair { pair_id: String, message: String },

    /// Dataset-level contract violation (empty dataset, bad split fraction).
    #[error("dataset error: {0}")]
    Dataset(String),

    /// An operation that needs labels was given an unlabeled dataset.
    #[error("unlabeled dataset: {0}")]
    Unlabeled(String),

    /// A metric could not be computed; names the metric so pipeline
    /// failures point at the exact aggregate.
    #[error("metric {metric}: {message}")]
    Metric {
        metric: &'static str,
        message: String,
    },

    #[error("tokenizer error: {0}")]
    Tokenize(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("augmentation error: {0}")]
    Augment(String),

    /// Translation pipeline failure after retries were exhausted.
    /// Lists every pair that could not be translated.
    #[error("translation failed for {} pair(s): {}", failed_pair_ids.len(), failed_pair_ids.join(", "))]
    Translation { failed_pair_ids: Vec<String> },

    #[error("report error: {0}")]
    Report(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag for this error class. The CLI prints it
    /// in its single-line error output.
    pub fn slug(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InvalidPair { .. } => "invalid-pair",
            Error::Dataset(_) => "dataset",
            Error::Unlabeled(_) => "unlabeled",
            Error::Metric { .. } => "metric",
            Error::Tokenize(_) => "tokenize",
            Error::Model(_) => "model",
            Error::Training(_) => "training",
            Error::Checkpoint(_) => "checkpoint",
            Error::Augment(_) => "augment",
            Error::Translation { .. } => "translation",
            Error::Report(_) => "report",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

//! Translate-then-score evaluation for non-English datasets.
//!
//! Both sentences of every pair are translated into the model's training
//! language through a pluggable client, then the translated pairs are
//! scored and evaluated exactly like native data. Responses are cached on
//! disk ([`TranslationCache`]), so repeated runs are reproducible and make
//! no external calls once warm.
//!
//! Pair ids and scores pass through translation untouched; only sentence
//! text changes.

mod cache;
#[cfg(feature = "http")]
mod http;

pub use cache::TranslationCache;
#[cfg(feature = "http")]
pub use http::HttpTranslationClient;

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use crate::data::{LabeledPair, PairDataset};
use crate::encoder::{PairTokenizer, RegressionModel};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvaluationReport, PredictionSet};

/// Why a single translation request failed. Transient and quota failures
/// are worth retrying; permanent ones are not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranslationFailure {
    /// Temporary outage (network error, server error, timeout).
    Transient(String),
    /// The request itself is unacceptable and will never succeed.
    Permanent(String),
    /// Rate or usage limit hit; may clear after a pause.
    Quota(String),
}

impl TranslationFailure {
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            TranslationFailure::Transient(_) | TranslationFailure::Quota(_)
        )
    }
}

impl std::fmt::Display for TranslationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TranslationFailure::Transient(m) => write!(f, "transient failure: {m}"),
            TranslationFailure::Permanent(m) => write!(f, "permanent failure: {m}"),
            TranslationFailure::Quota(m) => write!(f, "quota exhausted: {m}"),
        }
    }
}

/// Translates single sentences between languages.
///
/// Implementations must be thread-safe: the pipeline issues up to
/// [`TranslationOptions::concurrency`] calls at once. Non-empty input must
/// yield non-empty output or a typed failure.
pub trait TranslationClient: Send + Sync {
    fn translate(
        &self,
        text: &str,
        source_language: &str,
        target_language: &str,
    ) -> std::result::Result<String, TranslationFailure>;

    /// Names the client in logs and run records.
    fn identifier(&self) -> String;
}

/// Returns its input unchanged. Turns the translate-then-score pipeline
/// into a plain evaluation, which pins the pipeline's plumbing in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityClient;

impl TranslationClient for IdentityClient {
    fn translate(
        &self,
        text: &str,
        _source_language: &str,
        _target_language: &str,
    ) -> std::result::Result<String, TranslationFailure> {
        Ok(text.to_string())
    }

    fn identifier(&self) -> String {
        "identity".into()
    }
}

/// Translates by exact lookup in a fixed table; unknown input is a
/// permanent failure.
#[derive(Debug, Clone, Default)]
pub struct TableClient {
    entries: HashMap<(String, String, String), String>,
}

impl TableClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_entry(
        mut self,
        text: &str,
        source_language: &str,
        target_language: &str,
        translated: &str,
    ) -> Self {
        self.entries.insert(
            (
                text.to_string(),
                source_language.to_string(),
                target_language.to_string(),
            ),
            translated.to_string(),
        );
        self
    }
}

impl TranslationClient for TableClient {
    fn translate(
        &self,
        text: &str,
        source_language: &str,
        target_language: &str,
    ) -> std::result::Result<String, TranslationFailure> {
        self.entries
            .get(&(
                text.to_string(),
                source_language.to_string(),
                target_language.to_string(),
            ))
            .cloned()
            .ok_or_else(|| {
                TranslationFailure::Permanent(format!(
                    "no table entry for {source_language}->{target_language} text"
                ))
            })
    }

    fn identifier(&self) -> String {
        "table".into()
    }
}

/// Retry and concurrency knobs for the translation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationOptions {
    /// Total tries per sentence, counting the first. At least 1.
    pub max_attempts: usize,
    /// Pause before the first retry; doubles after each further failure.
    pub initial_backoff: Duration,
    /// Upper bound on in-flight client calls. At least 1.
    pub concurrency: usize,
}

impl Default for TranslationOptions {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
            concurrency: 4,
        }
    }
}

impl TranslationOptions {
    fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::Config(
                "translation max_attempts must be at least 1".into(),
            ));
        }
        if self.concurrency == 0 {
            return Err(Error::Config(
                "translation concurrency must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Translates both sentences of every pair into `target_language` with
/// default retry and concurrency settings.
pub fn translate_dataset(
    dataset: &PairDataset,
    client: &dyn TranslationClient,
    cache: &mut TranslationCache,
    target_language: &str,
) -> Result<PairDataset> {
    translate_dataset_with(
        dataset,
        client,
        cache,
        target_language,
        &TranslationOptions::default(),
    )
}

/// [`translate_dataset`] with explicit options.
///
/// The cache is consulted before the client, and every successful
/// response is written through to it immediately, so a run that fails
/// partway resumes from what it already translated. Sentences that still
/// fail after retries do not abort other sentences; they are collected
/// and reported together as [`Error::Translation`] naming every affected
/// pair in dataset order.
pub fn translate_dataset_with(
    dataset: &PairDataset,
    client: &dyn TranslationClient,
    cache: &mut TranslationCache,
    target_language: &str,
    options: &TranslationOptions,
) -> Result<PairDataset> {
    options.validate()?;
    let source = dataset.language().to_string();

    // Unique cache misses, in first-appearance order so cache file
    // contents are deterministic.
    let mut pending: Vec<&str> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for pair in dataset.pairs() {
        for text in [pair.sentence_1.as_str(), pair.sentence_2.as_str()] {
            if seen.insert(text) && cache.get(text, &source, target_language).is_none() {
                pending.push(text);
            }
        }
    }

    let mut failed: HashSet<&str> = HashSet::new();
    for wave in pending.chunks(options.concurrency) {
        let results: Vec<std::result::Result<String, TranslationFailure>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|text| {
                        scope.spawn(|| {
                            translate_with_retry(client, text, &source, target_language, options)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
        for (text, result) in wave.iter().zip(results) {
            match result {
                Ok(translated) if !translated.trim().is_empty() => {
                    cache.insert(text, &source, target_language, &translated)?;
                }
                Ok(_) => {
                    log::warn!("translation client returned blank text for a sentence, treating as failure");
                    failed.insert(text);
                }
                Err(failure) => {
                    log::warn!("translation failed after retries: {failure}");
                    failed.insert(text);
                }
            }
        }
    }

    let mut failed_pair_ids = Vec::new();
    let mut translated_pairs = Vec::with_capacity(dataset.len());
    for pair in dataset.pairs() {
        let lookup = |text: &str| {
            cache
                .get(text, &source, target_language)
                .map(str::to_string)
        };
        match (lookup(&pair.sentence_1), lookup(&pair.sentence_2)) {
            (Some(sentence_1), Some(sentence_2)) => translated_pairs.push(LabeledPair {
                pair_id: pair.pair_id.clone(),
                sentence_1,
                sentence_2,
                score: pair.score,
            }),
            _ => failed_pair_ids.push(pair.pair_id.clone()),
        }
    }
    if !failed_pair_ids.is_empty() {
        return Err(Error::Translation { failed_pair_ids });
    }
    PairDataset::new(target_language, dataset.split_name(), translated_pairs)
}

/// One sentence, with bounded retries and exponential backoff on
/// retryable failures. Permanent failures return immediately.
fn translate_with_retry(
    client: &dyn TranslationClient,
    text: &str,
    source_language: &str,
    target_language: &str,
    options: &TranslationOptions,
) -> std::result::Result<String, TranslationFailure> {
    let mut backoff = options.initial_backoff;
    for attempt in 1..=options.max_attempts {
        match client.translate(text, source_language, target_language) {
            Ok(translated) => return Ok(translated),
            Err(failure) => {
                if !failure.is_retryable() || attempt == options.max_attempts {
                    return Err(failure);
                }
                log::debug!(
                    "translation attempt {attempt}/{} failed ({failure}), backing off {:?}",
                    options.max_attempts,
                    backoff
                );
                std::thread::sleep(backoff);
                backoff = backoff.saturating_mul(2);
            }
        }
    }
    unreachable!("loop returns on success or final failure")
}

/// Translates a labeled dataset, scores it with the model, and evaluates.
///
/// With [`IdentityClient`] this is bit-for-bit identical to evaluating
/// the model on the untranslated dataset.
#[allow(clippy::too_many_arguments)]
pub fn crosslingual_evaluate(
    model: &RegressionModel,
    tokenizer: &dyn PairTokenizer,
    dataset: &PairDataset,
    client: &dyn TranslationClient,
    cache: &mut TranslationCache,
    target_language: &str,
    max_tokens: usize,
    batch_size: usize,
) -> Result<EvaluationReport> {
    let labels = dataset.scores()?;
    let translated = translate_dataset(dataset, client, cache, target_language)?;
    let predictions = model.predict(tokenizer, translated.pairs(), max_tokens, batch_size)?;
    evaluate(&PredictionSet::new(labels, predictions)?)
}

//! Paraphrase-based training-set expansion.
//!
//! Each original pair may contribute up to `copies_per_pair` new pairs
//! whose target sentence(s) are replaced by paraphrases. Augmented pairs
//! inherit the source pair's score unchanged; that assumption (paraphrase
//! preserves relatedness, without human validation) is the documented
//! trade-off of the technique, so every generated pair is recorded in a
//! manifest for downstream filtering.
//!
//! Augmentation applies to training splits only and is skip-tolerant: a
//! paraphraser failure on one pair logs a warning and drops that pair's
//! copies rather than aborting the run.

use serde::{Deserialize, Serialize};

use crate::data::{LabeledPair, PairDataset, SplitName};
use crate::error::{Error, Result};

/// Generates reworded variants of a sentence.
///
/// Implementations must return at most `count` variants, each non-blank.
/// `identifier` names the generator in manifests.
pub trait Paraphraser: Send + Sync {
    fn paraphrase(&self, text: &str, count: usize) -> Result<Vec<String>>;
    fn identifier(&self) -> String;
}

/// Self-contained stand-in for a learned paraphrase generator: variant
/// `k` rotates the word order left by `k` positions (modulo the word
/// count), which keeps content words intact while reordering them.
/// Variants of one-word texts equal the input; the policy's dedup flag
/// drops such copies. A generation model can replace this through the
/// same trait.
#[derive(Debug, Clone, Copy, Default)]
pub struct RotationParaphraser;

impl Paraphraser for RotationParaphraser {
    fn paraphrase(&self, text: &str, count: usize) -> Result<Vec<String>> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::Augment("cannot paraphrase blank text".into()));
        }
        Ok((1..=count)
            .map(|k| {
                let shift = k % words.len();
                let mut rotated = Vec::with_capacity(words.len());
                rotated.extend_from_slice(&words[shift..]);
                rotated.extend_from_slice(&words[..shift]);
                rotated.join(" ")
            })
            .collect())
    }

    fn identifier(&self) -> String {
        "rotation-v1".into()
    }
}

/// Which sentence of a pair gets paraphrased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentTarget {
    First,
    Second,
    /// Both sentences replaced, each by its own independent paraphrase.
    BothIndependently,
}

impl std::fmt::Display for AugmentTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            AugmentTarget::First => "first",
            AugmentTarget::Second => "second",
            AugmentTarget::BothIndependently => "both-independently",
        };
        f.write_str(name)
    }
}

/// How a training set is expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub copies_per_pair: usize,
    pub target: AugmentTarget,
    /// Drop generated pairs whose sentences equal any pair already in
    /// the output (originals or earlier generated pairs).
    pub dedup: bool,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            copies_per_pair: 1,
            target: AugmentTarget::First,
            dedup: false,
        }
    }
}

/// Provenance record for one generated pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub source_pair_id: String,
    pub paraphraser: String,
    pub target: AugmentTarget,
    pub copy_index: usize,
}

/// Expands a labeled training set per the policy.
///
/// The output starts with every original pair in order, followed by the
/// generated pairs (by source order, then copy index), each scored with
/// its source's score and identified as `<source>#aug<k>`. The returned
/// manifest has one entry per generated pair that made it into the
/// output.
pub fn augment(
    train_set: &PairDataset,
    paraphraser: &dyn Paraphraser,
    policy: &AugmentationPolicy,
) -> Result<(PairDataset, Vec<ManifestEntry>)> {
    if train_set.split_name() != SplitName::Train {
        return Err(Error::Augment(format!(
            "augmentation applies to the train split only, got {}",
            train_set.split_name()
        )));
    }
    if !train_set.is_fully_labeled() {
        return Err(Error::Unlabeled(
            "augmentation requires a labeled training set".into(),
        ));
    }
    let mut pairs: Vec<LabeledPair> = train_set.pairs().to_vec();
    let mut manifest = Vec::new();
    if policy.copies_per_pair == 0 {
        let dataset = PairDataset::new(train_set.language(), SplitName::Train, pairs)?;
        return Ok((dataset, manifest));
    }

    let mut seen: std::collections::HashSet<(String, String)> = pairs
        .iter()
        .map(|p| (p.sentence_1.clone(), p.sentence_2.clone()))
        .collect();

    for source in train_set.pairs() {
        let variants = match generate_variants(source, paraphraser, policy) {
            Ok(v) => v,
            Err(e) => {
                log::warn!(
                    "skipping augmentation of pair {}: {e}",
                    source.pair_id
                );
                continue;
            }
        };
        for (copy_index, (s1, s2)) in variants.into_iter().enumerate() {
            let k = copy_index + 1;
            if policy.dedup && !seen.insert((s1.clone(), s2.clone())) {
                continue;
            }
            let pair_id = format!("{}#aug{k}", source.pair_id);
            manifest.push(ManifestEntry {
                pair_id: pair_id.clone(),
                source_pair_id: source.pair_id.clone(),
                paraphraser: paraphraser.identifier(),
                target: policy.target,
                copy_index: k,
            });
            pairs.push(LabeledPair {
                pair_id,
                sentence_1: s1,
                sentence_2: s2,
                score: source.score,
            });
        }
    }

    let dataset = PairDataset::new(train_set.language(), SplitName::Train, pairs)
        .map_err(|e| Error::Augment(format!("derived pairs are invalid: {e}")))?;
    Ok((dataset, manifest))
}

/// Sentence tuples for the copies of one source pair, in copy order.
/// Blank variants are dropped with a warning; the copy count is bounded
/// by what the paraphraser actually returned.
fn generate_variants(
    source: &LabeledPair,
    paraphraser: &dyn Paraphraser,
    policy: &AugmentationPolicy,
) -> Result<Vec<(String, String)>> {
    let count = policy.copies_per_pair;
    let fetch = |text: &str| -> Result<Vec<String>> {
        let mut variants = paraphraser.paraphrase(text, count)?;
        if variants.len() > count {
            variants.truncate(count);
        }
        let before = variants.len();
        variants.retain(|v| !v.trim().is_empty());
        if variants.len() < before {
            log::warn!(
                "paraphraser returned {} blank variant(s) for pair {}",
                before - variants.len(),
                source.pair_id
            );
        }
        Ok(variants)
    };
    let tuples = match policy.target {
        AugmentTarget::First => fetch(&source.sentence_1)?
            .into_iter()
            .map(|s1| (s1, source.sentence_2.clone()))
            .collect(),
        AugmentTarget::Second => fetch(&source.sentence_2)?
            .into_iter()
            .map(|s2| (source.sentence_1.clone(), s2))
            .collect(),
        AugmentTarget::BothIndependently => {
            let first = fetch(&source.sentence_1)?;
            let second = fetch(&source.sentence_2)?;
            first.into_iter().zip(second).collect()
        }
    };
    Ok(tuples)
}

/// Writes manifest entries as one JSON object per line.
pub fn write_manifest<W: std::io::Write>(entries: &[ManifestEntry], mut writer: W) -> Result<()> {
    for entry in entries {
        let line = serde_json::to_string(entry)
            .map_err(|e| Error::Augment(format!("cannot serialize manifest entry: {e}")))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

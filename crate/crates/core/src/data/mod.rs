//! Sentence-pair datasets: canonical CSV parsing and serialization, the
//! SemEval-distribution importer, seeded train/dev splitting, and score
//! statistics.
//!
//! The canonical on-disk format is UTF-8 CSV with header
//! `pair_id,sentence_1,sentence_2,score` and RFC-4180 quoting. A missing
//! score marks an unlabeled pair (competition test files); statistics and
//! evaluation reject unlabeled data explicitly.
//!
//! Datasets are immutable after construction and safe to share across
//! threads.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of histogram bins in [`DatasetStats`]; width 0.1 over [0,1].
pub const HISTOGRAM_BINS: usize = 10;

// Upper edges of the first nine histogram bins, as literals. Comparing
// against computed multiples of 0.1 would misplace scores that sit
// exactly on a bin edge after decimal parsing.
const HISTOGRAM_EDGES: [f64; HISTOGRAM_BINS - 1] =
    [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// One sentence pair with an optional relatedness score in `[0,1]`.
///
/// `score` is `None` only for unlabeled competition files; every labeled
/// operation rejects pairs without a score.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub pair_id: String,
    pub sentence_1: String,
    pub sentence_2: String,
    pub score: Option<f64>,
}

impl LabeledPair {
    fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidPair {
            pair_id: self.pair_id.clone(),
            message,
        };
        if self.pair_id.is_empty() {
            return Err(Error::InvalidPair {
                pair_id: "<empty>".into(),
                message: "pair_id must be non-empty".into(),
            });
        }
        if self.sentence_1.trim().is_empty() {
            return Err(invalid("sentence_1 is empty".into()));
        }
        if self.sentence_2.trim().is_empty() {
            return Err(invalid("sentence_2 is empty".into()));
        }
        if let Some(score) = self.score {
            if !score.is_finite() || !(0.0..=1.0).contains(&score) {
                return Err(invalid(format!("score {score} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Which portion of an experiment a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Dev,
    Test,
    Unsplit,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
            SplitName::Unsplit => "unsplit",
        };
        f.write_str(name)
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            "unsplit" => Ok(SplitName::Unsplit),
            other => Err(Error::Dataset(format!(
                "unknown split name {other:?}; expected train, dev, test, or unsplit"
            ))),
        }
    }
}

/// An ordered, immutable collection of scored sentence pairs for one
/// language and split. Iteration order is the construction order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    language: String,
    split_name: SplitName,
    pairs: Vec<LabeledPair>,
}

impl PairDataset {
    /// Validates every pair and the uniqueness of ids.
    pub fn new(language: &str, split_name: SplitName, pairs: Vec<LabeledPair>) -> Result<Self> {
        if language.trim().is_empty() {
            return Err(Error::Dataset("language code must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for pair in &pairs {
            pair.validate()?;
            if !seen.insert(pair.pair_id.as_str()) {
                return Err(Error::InvalidPair {
                    pair_id: pair.pair_id.clone(),
                    message: "duplicate pair_id".into(),
                });
            }
        }
        Ok(Self {
            language: language.to_string(),
            split_name,
            pairs,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn split_name(&self) -> SplitName {
        self.split_name
    }

    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// True when every pair carries a score.
    pub fn is_fully_labeled(&self) -> bool {
        self.pairs.iter().all(|p| p.score.is_some())
    }

    /// Scores in pair order. Errors naming the first unlabeled pair.
    pub fn scores(&self) -> Result<Vec<f64>> {
        self.pairs
            .iter()
            .map(|p| {
                p.score.ok_or_else(|| Error::Unlabeled(format!(
                    "pair {} has no score",
                    p.pair_id
                )))
            })
            .collect()
    }

    /// Rebuilds the dataset with a different split name, same pairs.
    pub fn with_split_name(&self, split_name: SplitName) -> Self {
        Self {
            language: self.language.clone(),
            split_name,
            pairs: self.pairs.clone(),
        }
    }
}

/// Summary statistics over the scores of a labeled dataset.
///
/// The histogram has ten width-0.1 bins over [0,1]; bin `b` covers
/// `[0.1b, 0.1(b+1))` with the last bin closed at 1.0. `std_score` is the
/// population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub mean_score: f64,
    pub std_score: f64,
    pub min_score: f64,
    pub max_score: f64,
    pub histogram: [u64; HISTOGRAM_BINS],
}

/// Parses canonical CSV (`pair_id,sentence_1,sentence_2,score`) into a
/// dataset. An empty score field yields an unlabeled pair.
pub fn parse_dataset<R: Read>(
    source: R,
    language: &str,
    split_name: SplitName,
) -> Result<PairDataset> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(&e))?
        .clone();
    let expected = ["pair_id", "sentence_1", "sentence_2", "score"];
    let actual: Vec<&str> = headers.iter().collect();
    if actual != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {expected:?}, found {actual:?}"),
        });
    }
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", expected.len(), record.len()),
            });
        }
        let pair_id = record[0].to_string();
        let score_field = &record[3];
        let score = if score_field.is_empty() {
            None
        } else {
            Some(parse_score(score_field, &pair_id, line)?)
        };
        pairs.push(LabeledPair {
            pair_id,
            sentence_1: record[1].to_string(),
            sentence_2: record[2].to_string(),
            score,
        });
    }
    PairDataset::new(language, split_name, pairs)
}

/// Reads a canonical CSV file from disk.
pub fn read_dataset(path: &Path, language: &str, split_name: SplitName) -> Result<PairDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset(std::io::BufReader::new(file), language, split_name)
}

/// Writes the canonical CSV form. Quoting is applied only where RFC 4180
/// requires it and floats use their shortest round-trip representation,
/// so serialize → parse → serialize is byte-identical.
pub fn serialize<W: Write>(dataset: &PairDataset, writer: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    out.write_record(["pair_id", "sentence_1", "sentence_2", "score"])
        .map_err(|e| csv_error(&e))?;
    for pair in dataset.pairs() {
        let score = pair.score.map_or(String::new(), |s| s.to_string());
        out.write_record([
            pair.pair_id.as_str(),
            pair.sentence_1.as_str(),
            pair.sentence_2.as_str(),
            score.as_str(),
        ])
        .map_err(|e| csv_error(&e))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a canonical CSV file to disk.
pub fn write_dataset(dataset: &PairDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serialize(dataset, std::io::BufWriter::new(file))
}

/// Imports the SemEval distribution shape: header `PairID,Text,Score`,
/// where `Text` holds both sentences separated by a newline inside one
/// quoted field. A literal two-character `\n` sequence is accepted in
/// place of the newline, since distributed files vary. A file without a
/// `Score` column imports as an unlabeled dataset.
pub fn import_semrel<R: Read>(
    source: R,
    language: &str,
    split_name: SplitName,
) -> Result<PairDataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers().map_err(|e| csv_error(&e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("PairID").ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing PairID column".into(),
    })?;
    let text_col = col("Text").ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing Text column".into(),
    })?;
    let score_col = col("Score");
    let mut pairs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing field {idx}"),
            })
        };
        let pair_id = field(id_col)?.to_string();
        let text = field(text_col)?;
        let (sentence_1, sentence_2) = split_text_field(text).ok_or_else(|| {
            Error::InvalidPair {
                pair_id: pair_id.clone(),
                message: "Text field has no newline separator".into(),
            }
        })?;
        let score = match score_col {
            Some(idx) => {
                let raw = field(idx)?;
                if raw.is_empty() {
                    None
                } else {
                    Some(parse_score(raw, &pair_id, line)?)
                }
            }
            None => None,
        };
        pairs.push(LabeledPair {
            pair_id,
            sentence_1,
            sentence_2,
            score,
        });
    }
    PairDataset::new(language, split_name, pairs)
}

/// Splits `Text` on the first newline, or on the first literal `\n`
/// sequence when no real newline is present. A `\r` before the newline
/// (CRLF inside a quoted field) is stripped.
fn split_text_field(text: &str) -> Option<(String, String)> {
    if let Some((first, rest)) = text.split_once('\n') {
        return Some((first.trim_end_matches('\r').to_string(), rest.to_string()));
    }
    text.split_once("\\n")
        .map(|(first, rest)| (first.to_string(), rest.to_string()))
}

/// Partitions a dataset into train and held-out portions.
///
/// The train side receives `round(train_fraction × count)` pairs chosen by
/// a seeded shuffle; both sides keep the original relative pair order, so
/// the result is deterministic for a fixed seed.
pub fn split(
    dataset: &PairDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(PairDataset, PairDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Dataset(format!(
            "train_fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Dataset(format!(
            "need at least 2 pairs to split, got {n}"
        )));
    }
    let train_size = (train_fraction * n as f64).round() as usize;
    if train_size == 0 || train_size == n {
        return Err(Error::Dataset(format!(
            "train_fraction {train_fraction} leaves an empty side for {n} pairs"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let chosen: HashSet<usize> = indices[..train_size].iter().copied().collect();
    let mut train_pairs = Vec::with_capacity(train_size);
    let mut held_pairs = Vec::with_capacity(n - train_size);
    for (i, pair) in dataset.pairs().iter().enumerate() {
        if chosen.contains(&i) {
            train_pairs.push(pair.clone());
        } else {
            held_pairs.push(pair.clone());
        }
    }
    let train = PairDataset::new(dataset.language(), SplitName::Train, train_pairs)?;
    let held = PairDataset::new(dataset.language(), SplitName::Dev, held_pairs)?;
    Ok((train, held))
}

/// Score statistics for a labeled, non-empty dataset.
pub fn compute_stats(dataset: &PairDataset) -> Result<DatasetStats> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot compute stats of an empty dataset".into()));
    }
    let scores = dataset.scores()?;
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let histogram = score_histogram(&scores);
    Ok(DatasetStats {
        count: scores.len(),
        mean_score: mean,
        std_score: var.sqrt(),
        min_score: scores.iter().cloned().fold(f64::INFINITY, f64::min),
        max_score: scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        histogram,
    })
}

/// Ten-bin score histogram with the same binning `compute_stats` uses,
/// so report artifacts agree with dataset statistics exactly.
pub fn score_histogram(scores: &[f64]) -> [u64; HISTOGRAM_BINS] {
    let mut histogram = [0u64; HISTOGRAM_BINS];
    for &score in scores {
        histogram[histogram_bin(score)] += 1;
    }
    histogram
}

/// Bin index for a validated score; edges at multiples of 0.1, last bin
/// closed at 1.0.
fn histogram_bin(score: f64) -> usize {
    HISTOGRAM_EDGES
        .iter()
        .position(|&edge| score < edge)
        .unwrap_or(HISTOGRAM_BINS - 1)
}

fn parse_score(raw: &str, pair_id: &str, line: u64) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("pair {pair_id}: score {raw:?} is not a decimal number"),
    })?;
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidPair {
            pair_id: pair_id.to_string(),
            message: format!("score {value} outside [0,1]"),
        });
    }
    Ok(value)
}

fn csv_error(err: &csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: err.to_string(),
    }
}

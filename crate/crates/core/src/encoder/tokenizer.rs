//! Sentence-pair tokenization.
//!
//! A pair is encoded as one sequence with the pretrained-encoder pair
//! convention: `<bos> sentence_1 <eos> <eos> sentence_2 <eos>`. Tokenized
//! output carries no padding; batching pads to the longest item.

use sha2::{Digest, Sha256};

use crate::data::LabeledPair;
use crate::error::{Error, Result};

/// Token id of the sequence-start marker; its hidden state feeds the head.
pub const BOS_ID: usize = 0;
/// Token id used to pad batches to a common length.
pub const PAD_ID: usize = 1;
/// Token id of the sentence separator / end marker.
pub const EOS_ID: usize = 2;
/// First id available to content tokens.
pub const FIRST_CONTENT_ID: usize = 3;

/// Special-token overhead of one encoded pair (`<bos>` + three `<eos>`).
pub const SPECIAL_TOKENS: usize = 4;

/// One encoded sentence pair. `attention_mask[i]` is 1 exactly where
/// `token_ids[i]` is a real (non-padding) token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedInput {
    pub token_ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Copy with `PAD_ID` appended up to `target_len`.
    pub fn padded_to(&self, target_len: usize) -> TokenizedInput {
        let mut ids = self.token_ids.clone();
        let mut mask = self.attention_mask.clone();
        ids.resize(target_len, PAD_ID);
        mask.resize(target_len, 0);
        TokenizedInput {
            token_ids: ids,
            attention_mask: mask,
        }
    }
}

/// Maps sentence pairs to token id sequences.
///
/// Implementations must be deterministic: the same pair always yields the
/// same ids. `identifier` names the tokenizer inside checkpoints so a
/// model is never resumed with a different vocabulary.
pub trait PairTokenizer: Send + Sync {
    fn encode_pair(&self, sentence_1: &str, sentence_2: &str, max_tokens: usize)
        -> Result<TokenizedInput>;
    fn vocab_size(&self) -> usize;
    fn identifier(&self) -> String;
}

/// Deterministic whitespace tokenizer mapping each lowercased word to a
/// hashed id. Self-contained stand-in for a learned subword vocabulary:
/// no vocabulary file is needed and ids are stable across runs and
/// platforms (SHA-256 of the word, reduced modulo the content range).
#[derive(Debug, Clone)]
pub struct HashTokenizer {
    vocab_size: usize,
}

impl HashTokenizer {
    /// `vocab_size` must leave room for the special ids.
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size <= SPECIAL_TOKENS {
            return Err(Error::Tokenize(format!(
                "vocab_size {vocab_size} leaves no content ids"
            )));
        }
        Ok(Self { vocab_size })
    }

    fn word_id(&self, word: &str) -> usize {
        let digest = Sha256::digest(word.as_bytes());
        let mut value = [0u8; 8];
        value.copy_from_slice(&digest[..8]);
        let span = self.vocab_size - FIRST_CONTENT_ID;
        FIRST_CONTENT_ID + (u64::from_le_bytes(value) % span as u64) as usize
    }

    fn words(&self, sentence: &str) -> Vec<usize> {
        sentence
            .split_whitespace()
            .map(|w| self.word_id(&w.to_lowercase()))
            .collect()
    }
}

impl PairTokenizer for HashTokenizer {
    fn encode_pair(
        &self,
        sentence_1: &str,
        sentence_2: &str,
        max_tokens: usize,
    ) -> Result<TokenizedInput> {
        if max_tokens < SPECIAL_TOKENS {
            return Err(Error::Tokenize(format!(
                "max_tokens {max_tokens} leaves no room for special tokens"
            )));
        }
        if sentence_1.trim().is_empty() || sentence_2.trim().is_empty() {
            return Err(Error::Tokenize("cannot tokenize an empty sentence".into()));
        }
        let mut first = self.words(sentence_1);
        let mut second = self.words(sentence_2);
        // Longest-first truncation: trim one token at a time from the
        // longer sentence until the encoded pair fits.
        let budget = max_tokens - SPECIAL_TOKENS;
        while first.len() + second.len() > budget {
            if first.len() >= second.len() {
                first.pop();
            } else {
                second.pop();
            }
        }
        let mut token_ids = Vec::with_capacity(first.len() + second.len() + SPECIAL_TOKENS);
        token_ids.push(BOS_ID);
        token_ids.extend(&first);
        token_ids.push(EOS_ID);
        token_ids.push(EOS_ID);
        token_ids.extend(&second);
        token_ids.push(EOS_ID);
        let attention_mask = vec![1; token_ids.len()];
        Ok(TokenizedInput {
            token_ids,
            attention_mask,
        })
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn identifier(&self) -> String {
        format!("hash-v1/{}", self.vocab_size)
    }
}

/// Rebuilds the tokenizer a checkpoint names, so a saved model is always
/// scored with the vocabulary it was trained on.
pub fn tokenizer_from_identifier(identifier: &str) -> Result<HashTokenizer> {
    if let Some(vocab) = identifier.strip_prefix("hash-v1/") {
        let vocab_size = vocab.parse().map_err(|_| {
            Error::Tokenize(format!("malformed tokenizer identifier {identifier:?}"))
        })?;
        return HashTokenizer::new(vocab_size);
    }
    Err(Error::Tokenize(format!(
        "unknown tokenizer identifier {identifier:?}"
    )))
}

/// Encodes a dataset pair with the encoder's pair convention.
pub fn tokenize(
    tokenizer: &dyn PairTokenizer,
    pair: &LabeledPair,
    max_tokens: usize,
) -> Result<TokenizedInput> {
    tokenizer
        .encode_pair(&pair.sentence_1, &pair.sentence_2, max_tokens)
        .map_err(|e| match e {
            Error::Tokenize(m) => Error::Tokenize(format!("pair {}: {m}", pair.pair_id)),
            other => other,
        })
}

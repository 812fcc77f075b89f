//! Transformer encoder with a scalar regression head.
//!
//! The architecture follows the pretrained-encoder family: word,
//! position, and segment embeddings with layer norm; a stack of identical
//! post-norm layers of masked multi-head self-attention and a GELU
//! feed-forward block; and a head of dense + tanh + dropout + dense
//! reading the sequence-start token's final hidden state.
//!
//! Forward and backward passes are written out explicitly over f64
//! matrices; no autodiff framework is involved. Gradients accumulate in
//! the layers and are addressed through a named parameter visitor.

mod config;
mod model;
pub(crate) mod net;
mod tokenizer;

pub use config::EncoderConfig;
pub use model::{ItemCache, ParamMut, RegressionModel};
pub use net::Mode;
pub use tokenizer::{
    tokenize, tokenizer_from_identifier, HashTokenizer, PairTokenizer, TokenizedInput, BOS_ID,
    EOS_ID, FIRST_CONTENT_ID, PAD_ID, SPECIAL_TOKENS,
};

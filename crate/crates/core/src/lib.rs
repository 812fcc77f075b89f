//! Fine-tuning toolkit for sentence-pair relatedness regression.
//!
//! The crate covers the full experiment loop: loading and splitting pair
//! datasets, fine-tuning a transformer encoder with a regression head,
//! scoring, evaluation (error metrics, rank correlations, binned confusion
//! matrices), paraphrase-based training-set augmentation, and
//! translate-then-score evaluation for languages without a trained model.
//!
//! Everything is seeded and deterministic: identical inputs, seed, and
//! configuration reproduce identical outputs byte for byte.

pub mod augment;
pub mod crosslingual;
pub mod data;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod training;

pub use error::{Error, Result};

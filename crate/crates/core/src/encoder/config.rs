use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters of the regression encoder.
///
/// The feed-forward intermediate width is fixed at four times
/// `hidden_size` and the activation is GELU; neither is configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_attention_heads: usize,
    pub vocab_size: usize,
    pub max_position: usize,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    /// The full-size configuration: 12 layers of width 768.
    pub fn base(vocab_size: usize) -> Self {
        Self {
            hidden_size: 768,
            num_layers: 12,
            num_attention_heads: 12,
            vocab_size,
            max_position: 512,
            dropout_rate: 0.1,
        }
    }

    /// The property-test configuration: 2 layers of width 32. Small
    /// enough for finite-difference checks and fast overfit runs.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            hidden_size: 32,
            num_layers: 2,
            num_attention_heads: 4,
            vocab_size,
            max_position: 64,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Model(m));
        if self.hidden_size == 0
            || self.num_layers == 0
            || self.num_attention_heads == 0
            || self.vocab_size == 0
            || self.max_position == 0
        {
            return invalid("all size fields must be positive".into());
        }
        if self.hidden_size % self.num_attention_heads != 0 {
            return invalid(format!(
                "hidden_size {} not divisible by num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return invalid(format!(
                "dropout_rate {} outside [0,1)",
                self.dropout_rate
            ));
        }
        Ok(())
    }

    /// Per-head width of attention projections.
    pub fn head_size(&self) -> usize {
        self.hidden_size / self.num_attention_heads
    }

    /// Feed-forward intermediate width.
    pub fn intermediate_size(&self) -> usize {
        4 * self.hidden_size
    }
}

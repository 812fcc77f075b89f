//! The regression model: embeddings, a stack of encoder layers, and a
//! two-layer head reading the sequence-start token.
//!
//! Training sees the raw (unbounded) head output so MSE gradients are
//! unsquashed; [`RegressionModel::predict`] clamps scores to `[0,1]`.
//!
//! Parameters are reachable through a named visitor with a fixed
//! traversal order; the optimizer, checkpoints, and gradient checks all
//! address parameters by those names.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledPair;
use crate::error::{Error, Result};

use super::config::EncoderConfig;
use super::net::{
    dropout, dropout_backward, EmbedCache, Embeddings, EncoderLayer, LayerCache, Linear, Mode,
};
use super::tokenizer::{tokenize, PairTokenizer, TokenizedInput};

/// Mutable view of one named parameter tensor and its gradient.
///
/// `decay` marks tensors subject to weight decay: weight matrices and
/// embedding tables, but not biases or layer-norm scales.
pub struct ParamMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
    pub grad: &'a [f64],
    pub decay: bool,
}

/// Activations of one forward pass, consumed by `backward_item`.
pub struct ItemCache {
    embed: EmbedCache,
    layers: Vec<LayerCache>,
    seq_len: usize,
    /// Encoder output row 0, the head input.
    pooled: Array2<f64>,
    /// Post-tanh head activation (pre-dropout).
    head_tanh: Array2<f64>,
    head_drop: Option<Array2<f64>>,
    /// Head activation after dropout, the input of the output map.
    head_dropped: Array2<f64>,
}

/// Transformer encoder with a scalar regression head.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    config: EncoderConfig,
    embeddings: Embeddings,
    layers: Vec<EncoderLayer>,
    head_dense: Linear,
    head_out: Linear,
}

impl RegressionModel {
    /// Randomly initialized model; same seed and config give identical
    /// weights.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = Embeddings::new(
            config.vocab_size,
            config.max_position,
            config.hidden_size,
            &mut rng,
        );
        let layers = (0..config.num_layers)
            .map(|_| {
                EncoderLayer::new(
                    config.hidden_size,
                    config.num_attention_heads,
                    config.intermediate_size(),
                    &mut rng,
                )
            })
            .collect();
        let head_dense = Linear::new(config.hidden_size, config.hidden_size, &mut rng);
        let head_out = Linear::new(config.hidden_size, 1, &mut rng);
        Ok(Self {
            config,
            embeddings,
            layers,
            head_dense,
            head_out,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Replaces the dropout rate used by training-mode forward passes.
    /// The trainer applies its tuned rate to the model it was handed.
    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Model(format!("dropout_rate {rate} outside [0,1)")));
        }
        self.config.dropout_rate = rate;
        Ok(())
    }

    /// Raw (unclamped) score for one tokenized pair.
    pub fn forward_item(
        &self,
        input: &TokenizedInput,
        mode: &mut Mode,
    ) -> Result<(f64, ItemCache)> {
        if input.is_empty() {
            return Err(Error::Model("empty token sequence".into()));
        }
        if input.len() > self.config.max_position {
            return Err(Error::Model(format!(
                "sequence length {} exceeds max_position {}",
                input.len(),
                self.config.max_position
            )));
        }
        if let Some(&id) = input.token_ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::Model(format!(
                "token id {id} outside vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        let rate = self.config.dropout_rate;
        let (mut x, embed) = self.embeddings.forward(&input.token_ids, rate, mode);
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&x, &input.attention_mask, rate, mode);
            x = next;
            layer_caches.push(cache);
        }
        let pooled = x.slice(ndarray::s![0..1, ..]).to_owned();
        let head_tanh = self.head_dense.forward(&pooled).mapv(f64::tanh);
        let (head_dropped, head_drop) = dropout(head_tanh.clone(), rate, mode);
        let score = self.head_out.forward(&head_dropped)[[0, 0]];
        let cache = ItemCache {
            embed,
            layers: layer_caches,
            seq_len: input.len(),
            pooled,
            head_tanh,
            head_drop,
            head_dropped,
        };
        Ok((score, cache))
    }

    /// Accumulates gradients for one item given the loss gradient w.r.t.
    /// its raw score. Call [`RegressionModel::zero_grads`] before a new
    /// accumulation round.
    pub fn backward_item(&mut self, cache: &ItemCache, d_score: f64) {
        let dy = Array2::from_elem((1, 1), d_score);
        let dd = self.head_out.backward(&cache.head_dropped, &dy);
        let dt = dropout_backward(dd, &cache.head_drop);
        let dpre = &dt * &cache.head_tanh.mapv(|t| 1.0 - t * t);
        let dpooled = self.head_dense.backward(&cache.pooled, &dpre);
        let mut dx = Array2::zeros((cache.seq_len, self.config.hidden_size));
        dx.row_mut(0).assign(&dpooled.row(0));
        for (layer, layer_cache) in self.layers.iter_mut().zip(&cache.layers).rev() {
            dx = layer.backward(layer_cache, &dx);
        }
        self.embeddings.backward(&cache.embed, &dx);
    }

    /// Clamped scores for a pair sequence, in input order. Batching pads
    /// each chunk to its longest item; padded positions are masked out of
    /// attention, so batch composition never changes a score.
    pub fn predict(
        &self,
        tokenizer: &dyn PairTokenizer,
        pairs: &[LabeledPair],
        max_tokens: usize,
        batch_size: usize,
    ) -> Result<Vec<f64>> {
        if batch_size == 0 {
            return Err(Error::Model("batch_size must be positive".into()));
        }
        let mut scores = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(batch_size) {
            let inputs: Vec<TokenizedInput> = chunk
                .iter()
                .map(|p| tokenize(tokenizer, p, max_tokens))
                .collect::<Result<_>>()?;
            let longest = inputs.iter().map(TokenizedInput::len).max().unwrap_or(0);
            for input in &inputs {
                let padded = input.padded_to(longest);
                let (raw, _) = self.forward_item(&padded, &mut Mode::Eval)?;
                scores.push(raw.clamp(0.0, 1.0));
            }
        }
        Ok(scores)
    }

    /// Resets all gradient accumulators to zero.
    pub fn zero_grads(&mut self) {
        self.for_each_grad_mut(&mut |g| g.fill(0.0));
    }

    /// Visits every parameter with its gradient, in a fixed order.
    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(ParamMut<'_>)) {
        let emb = &mut self.embeddings;
        visit_matrix("embeddings.word", &mut emb.word, &emb.dword, true, f);
        visit_matrix("embeddings.position", &mut emb.position, &emb.dposition, true, f);
        visit_matrix("embeddings.token_type", &mut emb.token_type, &emb.dtoken_type, true, f);
        visit_layer_norm("embeddings.ln", &mut emb.ln, f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let p = format!("layer{i}");
            visit_linear(&format!("{p}.attn.q"), &mut layer.attn.q, f);
            visit_linear(&format!("{p}.attn.k"), &mut layer.attn.k, f);
            visit_linear(&format!("{p}.attn.v"), &mut layer.attn.v, f);
            visit_linear(&format!("{p}.attn.out"), &mut layer.attn.out, f);
            visit_layer_norm(&format!("{p}.attn_ln"), &mut layer.attn_ln, f);
            visit_linear(&format!("{p}.ffn1"), &mut layer.ffn1, f);
            visit_linear(&format!("{p}.ffn2"), &mut layer.ffn2, f);
            visit_layer_norm(&format!("{p}.ffn_ln"), &mut layer.ffn_ln, f);
        }
        visit_linear("head.dense", &mut self.head_dense, f);
        visit_linear("head.out", &mut self.head_out, f);
    }

    /// Read-only visit of every parameter, same order and names as
    /// [`RegressionModel::for_each_param_mut`]. The two traversals must
    /// stay in lockstep; a test asserts they agree.
    pub fn for_each_param(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        let emb = &self.embeddings;
        f("embeddings.word", emb.word.shape(), emb.word.as_slice().unwrap());
        f("embeddings.position", emb.position.shape(), emb.position.as_slice().unwrap());
        f("embeddings.token_type", emb.token_type.shape(), emb.token_type.as_slice().unwrap());
        f("embeddings.ln.gamma", emb.ln.gamma.shape(), emb.ln.gamma.as_slice().unwrap());
        f("embeddings.ln.beta", emb.ln.beta.shape(), emb.ln.beta.as_slice().unwrap());
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("layer{i}");
            let linears = [
                ("attn.q", &layer.attn.q),
                ("attn.k", &layer.attn.k),
                ("attn.v", &layer.attn.v),
                ("attn.out", &layer.attn.out),
                ("ffn1", &layer.ffn1),
                ("ffn2", &layer.ffn2),
            ];
            // Attention norms sit between the projections in mut-visitor
            // order; replay the same order here.
            for (suffix, lin) in &linears[..4] {
                f(&format!("{p}.{suffix}.w"), lin.w.shape(), lin.w.as_slice().unwrap());
                f(&format!("{p}.{suffix}.b"), lin.b.shape(), lin.b.as_slice().unwrap());
            }
            let ln = &layer.attn_ln;
            f(&format!("{p}.attn_ln.gamma"), ln.gamma.shape(), ln.gamma.as_slice().unwrap());
            f(&format!("{p}.attn_ln.beta"), ln.beta.shape(), ln.beta.as_slice().unwrap());
            for (suffix, lin) in &linears[4..] {
                f(&format!("{p}.{suffix}.w"), lin.w.shape(), lin.w.as_slice().unwrap());
                f(&format!("{p}.{suffix}.b"), lin.b.shape(), lin.b.as_slice().unwrap());
            }
            let ln = &layer.ffn_ln;
            f(&format!("{p}.ffn_ln.gamma"), ln.gamma.shape(), ln.gamma.as_slice().unwrap());
            f(&format!("{p}.ffn_ln.beta"), ln.beta.shape(), ln.beta.as_slice().unwrap());
        }
        for (prefix, lin) in [("head.dense", &self.head_dense), ("head.out", &self.head_out)] {
            f(&format!("{prefix}.w"), lin.w.shape(), lin.w.as_slice().unwrap());
            f(&format!("{prefix}.b"), lin.b.shape(), lin.b.as_slice().unwrap());
        }
    }

    fn for_each_grad_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        let emb = &mut self.embeddings;
        for g in [&mut emb.dword, &mut emb.dposition, &mut emb.dtoken_type] {
            f(g.as_slice_mut().unwrap());
        }
        f(emb.ln.dgamma.as_slice_mut().unwrap());
        f(emb.ln.dbeta.as_slice_mut().unwrap());
        for layer in &mut self.layers {
            for lin in [
                &mut layer.attn.q,
                &mut layer.attn.k,
                &mut layer.attn.v,
                &mut layer.attn.out,
                &mut layer.ffn1,
                &mut layer.ffn2,
            ] {
                f(lin.dw.as_slice_mut().unwrap());
                f(lin.db.as_slice_mut().unwrap());
            }
            for ln in [&mut layer.attn_ln, &mut layer.ffn_ln] {
                f(ln.dgamma.as_slice_mut().unwrap());
                f(ln.dbeta.as_slice_mut().unwrap());
            }
        }
        for lin in [&mut self.head_dense, &mut self.head_out] {
            f(lin.dw.as_slice_mut().unwrap());
            f(lin.db.as_slice_mut().unwrap());
        }
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        let mut total = 0;
        self.for_each_param(&mut |_, _, data| total += data.len());
        total
    }
}

fn visit_matrix(
    name: &str,
    value: &mut Array2<f64>,
    grad: &Array2<f64>,
    decay: bool,
    f: &mut dyn FnMut(ParamMut<'_>),
) {
    let shape = value.shape().to_vec();
    f(ParamMut {
        name: name.to_string(),
        shape,
        data: value.as_slice_mut().unwrap(),
        grad: grad.as_slice().unwrap(),
        decay,
    });
}

fn visit_linear(prefix: &str, lin: &mut Linear, f: &mut dyn FnMut(ParamMut<'_>)) {
    visit_matrix(&format!("{prefix}.w"), &mut lin.w, &lin.dw, true, f);
    let shape = lin.b.shape().to_vec();
    f(ParamMut {
        name: format!("{prefix}.b"),
        shape,
        data: lin.b.as_slice_mut().unwrap(),
        grad: lin.db.as_slice().unwrap(),
        decay: false,
    });
}

fn visit_layer_norm(prefix: &str, ln: &mut super::net::LayerNorm, f: &mut dyn FnMut(ParamMut<'_>)) {
    let shape = ln.gamma.shape().to_vec();
    f(ParamMut {
        name: format!("{prefix}.gamma"),
        shape,
        data: ln.gamma.as_slice_mut().unwrap(),
        grad: ln.dgamma.as_slice().unwrap(),
        decay: false,
    });
    let shape = ln.beta.shape().to_vec();
    f(ParamMut {
        name: format!("{prefix}.beta"),
        shape,
        data: ln.beta.as_slice_mut().unwrap(),
        grad: ln.dbeta.as_slice().unwrap(),
        decay: false,
    });
}

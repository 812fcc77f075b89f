//! Layer primitives of the encoder: linear maps, layer normalization,
//! GELU, masked softmax attention, and the embedding table, each with an
//! explicit backward pass.
//!
//! Forward methods return the activations a backward pass needs as
//! explicit cache values; backward methods accumulate parameter gradients
//! into the layer (`dw`, `db`, ...) and return the gradient w.r.t. their
//! input. All math is f64.
//!
//! Masked attention assigns masked keys a probability of exactly 0.0, so
//! appending padding to a sequence never changes the outputs at real
//! positions, bit for bit.

use ndarray::{s, Array1, Array2, Axis};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Standard deviation of weight and embedding initialization.
const INIT_STD: f64 = 0.02;

/// Layer-norm variance floor.
const LN_EPS: f64 = 1e-12;

/// Whether a forward pass applies dropout, and from which RNG stream.
pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng },
}

/// Inverted dropout. Returns the (possibly) masked activations and the
/// applied mask; `None` mask means identity (eval mode or rate 0).
pub fn dropout(x: Array2<f64>, rate: f64, mode: &mut Mode) -> (Array2<f64>, Option<Array2<f64>>) {
    match mode {
        Mode::Train { rng } if rate > 0.0 => {
            let keep = 1.0 - rate;
            let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            (&x * &mask, Some(mask))
        }
        _ => (x, None),
    }
}

/// Backward through [`dropout`]: elementwise product with the saved mask.
pub fn dropout_backward(dy: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => &dy * m,
        None => dy,
    }
}

/// Exact GELU, `0.5·x·(1 + erf(x/√2))`, applied elementwise.
pub fn gelu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2)))
}

/// Elementwise GELU derivative at the pre-activation `x`:
/// `Φ(x) + x·φ(x)`.
pub fn gelu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let grad = x.mapv(|v| {
        let cdf = 0.5 * (1.0 + libm::erf(v / std::f64::consts::SQRT_2));
        let pdf = (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt();
        cdf + v * pdf
    });
    dy * &grad
}

/// Row-wise softmax over `scores` where key positions with `mask == 0`
/// receive probability exactly 0.0. At least one key must be unmasked.
pub fn masked_softmax(scores: &Array2<f64>, mask: &[u8]) -> Array2<f64> {
    let mut probs = Array2::zeros(scores.raw_dim());
    for (row, mut out) in scores.outer_iter().zip(probs.outer_iter_mut()) {
        let max = row
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == 1)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for ((&v, &m), slot) in row.iter().zip(mask).zip(out.iter_mut()) {
            if m == 1 {
                let e = (v - max).exp();
                *slot = e;
                sum += e;
            }
        }
        out.mapv_inplace(|e| e / sum);
    }
    probs
}

/// Backward through a row-wise softmax with probabilities `probs`:
/// `ds_j = p_j·(dp_j − Σ_k p_k·dp_k)`. Masked entries have `p_j = 0` and
/// therefore zero score gradient.
pub fn softmax_backward(probs: &Array2<f64>, dprobs: &Array2<f64>) -> Array2<f64> {
    let mut dscores = Array2::zeros(probs.raw_dim());
    for ((p_row, dp_row), mut out) in probs
        .outer_iter()
        .zip(dprobs.outer_iter())
        .zip(dscores.outer_iter_mut())
    {
        let inner: f64 = p_row.iter().zip(dp_row).map(|(&p, &dp)| p * dp).sum();
        for ((&p, &dp), slot) in p_row.iter().zip(dp_row).zip(out.iter_mut()) {
            *slot = p * (dp - inner);
        }
    }
    dscores
}

/// Dense affine map `y = x·W + b` with gradient accumulators.
#[derive(Debug, Clone)]
pub struct Linear {
    pub(crate) w: Array2<f64>,
    pub(crate) b: Array1<f64>,
    pub(crate) dw: Array2<f64>,
    pub(crate) db: Array1<f64>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        Self {
            w: Array2::from_shape_fn((inputs, outputs), |_| normal.sample(rng)),
            b: Array1::zeros(outputs),
            dw: Array2::zeros((inputs, outputs)),
            db: Array1::zeros(outputs),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates `dw`/`db` and returns the input gradient. `x` must be
    /// the forward input.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.dw += &x.t().dot(dy);
        self.db += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

/// Per-row activations saved by a layer-norm forward pass.
#[derive(Debug)]
pub struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Row-wise layer normalization with learnable scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub(crate) gamma: Array1<f64>,
    pub(crate) beta: Array1<f64>,
    pub(crate) dgamma: Array1<f64>,
    pub(crate) dbeta: Array1<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            dgamma: Array1::zeros(width),
            dbeta: Array1::zeros(width),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let width = x.ncols() as f64;
        let mut xhat = Array2::zeros(x.raw_dim());
        let mut inv_std = Array1::zeros(x.nrows());
        for ((row, mut xhat_row), inv) in x
            .outer_iter()
            .zip(xhat.outer_iter_mut())
            .zip(inv_std.iter_mut())
        {
            let mean = row.sum() / width;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / width;
            *inv = 1.0 / (var + LN_EPS).sqrt();
            for (&v, slot) in row.iter().zip(xhat_row.iter_mut()) {
                *slot = (v - mean) * *inv;
            }
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LnCache, dy: &Array2<f64>) -> Array2<f64> {
        let width = dy.ncols() as f64;
        self.dgamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.dbeta += &dy.sum_axis(Axis(0));
        let mut dx = Array2::zeros(dy.raw_dim());
        for (((dy_row, xhat_row), &inv), mut dx_row) in dy
            .outer_iter()
            .zip(cache.xhat.outer_iter())
            .zip(cache.inv_std.iter())
            .zip(dx.outer_iter_mut())
        {
            let dxhat: Vec<f64> = dy_row
                .iter()
                .zip(self.gamma.iter())
                .map(|(&d, &g)| d * g)
                .collect();
            let sum_dxhat: f64 = dxhat.iter().sum();
            let sum_dxhat_xhat: f64 = dxhat.iter().zip(xhat_row).map(|(&d, &h)| d * h).sum();
            for ((&d, &h), slot) in dxhat.iter().zip(xhat_row).zip(dx_row.iter_mut()) {
                *slot = inv / width * (width * d - sum_dxhat - h * sum_dxhat_xhat);
            }
        }
        dx
    }
}

/// Activations saved by a multi-head attention forward pass.
#[derive(Debug)]
pub struct AttnCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Pre-dropout attention probabilities, one matrix per head.
    probs: Vec<Array2<f64>>,
    prob_masks: Vec<Option<Array2<f64>>>,
    ctx: Array2<f64>,
}

/// Multi-head self-attention with padding-masked softmax.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub(crate) q: Linear,
    pub(crate) k: Linear,
    pub(crate) v: Linear,
    pub(crate) out: Linear,
    num_heads: usize,
    head_size: usize,
}

impl MultiHeadAttention {
    pub fn new(hidden: usize, num_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            q: Linear::new(hidden, hidden, rng),
            k: Linear::new(hidden, hidden, rng),
            v: Linear::new(hidden, hidden, rng),
            out: Linear::new(hidden, hidden, rng),
            num_heads,
            head_size: hidden / num_heads,
        }
    }

    pub fn forward(
        &self,
        x: &Array2<f64>,
        mask: &[u8],
        dropout_rate: f64,
        mode: &mut Mode,
    ) -> (Array2<f64>, AttnCache) {
        let seq = x.nrows();
        let q = self.q.forward(x);
        let k = self.k.forward(x);
        let v = self.v.forward(x);
        let scale = 1.0 / (self.head_size as f64).sqrt();
        let mut ctx = Array2::zeros((seq, self.num_heads * self.head_size));
        let mut probs = Vec::with_capacity(self.num_heads);
        let mut prob_masks = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let cols = s![.., h * self.head_size..(h + 1) * self.head_size];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let scores = qh.dot(&kh.t()) * scale;
            let p = masked_softmax(&scores, mask);
            let (p_dropped, p_mask) = dropout(p.clone(), dropout_rate, mode);
            ctx.slice_mut(cols).assign(&p_dropped.dot(&vh));
            probs.push(p);
            prob_masks.push(p_mask);
        }
        let y = self.out.forward(&ctx);
        let cache = AttnCache {
            x: x.clone(),
            q,
            k,
            v,
            probs,
            prob_masks,
            ctx,
        };
        (y, cache)
    }

    pub fn backward(&mut self, cache: &AttnCache, dy: &Array2<f64>) -> Array2<f64> {
        let dctx = self.out.backward(&cache.ctx, dy);
        let scale = 1.0 / (self.head_size as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.num_heads {
            let cols = s![.., h * self.head_size..(h + 1) * self.head_size];
            let qh = cache.q.slice(cols);
            let kh = cache.k.slice(cols);
            let vh = cache.v.slice(cols);
            let p = &cache.probs[h];
            let p_mask = &cache.prob_masks[h];
            let p_dropped = match p_mask {
                Some(m) => p * m,
                None => p.clone(),
            };
            let dctx_h = dctx.slice(cols);
            let dp_dropped = dctx_h.dot(&vh.t());
            dv.slice_mut(cols).assign(&p_dropped.t().dot(&dctx_h));
            let dp = dropout_backward(dp_dropped, p_mask);
            let dscores = softmax_backward(p, &dp) * scale;
            dq.slice_mut(cols).assign(&dscores.dot(&kh));
            dk.slice_mut(cols).assign(&dscores.t().dot(&qh));
        }
        let mut dx = self.q.backward(&cache.x, &dq);
        dx += &self.k.backward(&cache.x, &dk);
        dx += &self.v.backward(&cache.x, &dv);
        dx
    }
}

/// Activations saved by one encoder layer.
#[derive(Debug)]
pub struct LayerCache {
    attn: AttnCache,
    attn_drop: Option<Array2<f64>>,
    ln1: LnCache,
    /// Normalized attention output; input to the feed-forward block.
    n1: Array2<f64>,
    /// Feed-forward pre-activation (before GELU).
    ffn_pre: Array2<f64>,
    ffn_act: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
    ln2: LnCache,
}

/// One post-norm transformer layer: masked self-attention and a GELU
/// feed-forward block, each with residual connection and layer norm.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub(crate) attn: MultiHeadAttention,
    pub(crate) attn_ln: LayerNorm,
    pub(crate) ffn1: Linear,
    pub(crate) ffn2: Linear,
    pub(crate) ffn_ln: LayerNorm,
}

impl EncoderLayer {
    pub fn new(hidden: usize, heads: usize, intermediate: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            attn: MultiHeadAttention::new(hidden, heads, rng),
            attn_ln: LayerNorm::new(hidden),
            ffn1: Linear::new(hidden, intermediate, rng),
            ffn2: Linear::new(intermediate, hidden, rng),
            ffn_ln: LayerNorm::new(hidden),
        }
    }

    pub fn forward(
        &self,
        x: &Array2<f64>,
        mask: &[u8],
        dropout_rate: f64,
        mode: &mut Mode,
    ) -> (Array2<f64>, LayerCache) {
        let (a, attn_cache) = self.attn.forward(x, mask, dropout_rate, mode);
        let (a, attn_drop) = dropout(a, dropout_rate, mode);
        let (n1, ln1) = self.attn_ln.forward(&(&a + x));
        let ffn_pre = self.ffn1.forward(&n1);
        let ffn_act = gelu(&ffn_pre);
        let f = self.ffn2.forward(&ffn_act);
        let (f, ffn_drop) = dropout(f, dropout_rate, mode);
        let (y, ln2) = self.ffn_ln.forward(&(&f + &n1));
        let cache = LayerCache {
            attn: attn_cache,
            attn_drop,
            ln1,
            n1,
            ffn_pre,
            ffn_act,
            ffn_drop,
            ln2,
        };
        (y, cache)
    }

    pub fn backward(&mut self, cache: &LayerCache, dy: &Array2<f64>) -> Array2<f64> {
        let dr2 = self.ffn_ln.backward(&cache.ln2, dy);
        let df = dropout_backward(dr2.clone(), &cache.ffn_drop);
        let dact = self.ffn2.backward(&cache.ffn_act, &df);
        let dpre = gelu_backward(&cache.ffn_pre, &dact);
        let mut dn1 = self.ffn1.backward(&cache.n1, &dpre);
        dn1 += &dr2;
        let dr1 = self.attn_ln.backward(&cache.ln1, &dn1);
        let da = dropout_backward(dr1.clone(), &cache.attn_drop);
        let mut dx = self.attn.backward(&cache.attn, &da);
        dx += &dr1;
        dx
    }
}

/// Activations saved by the embedding stage.
#[derive(Debug)]
pub struct EmbedCache {
    ids: Vec<usize>,
    ln: LnCache,
    drop: Option<Array2<f64>>,
}

/// Token, position, and segment embeddings with layer norm. All pairs are
/// one segment, so a single token-type row is kept.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub(crate) word: Array2<f64>,
    pub(crate) position: Array2<f64>,
    pub(crate) token_type: Array2<f64>,
    pub(crate) ln: LayerNorm,
    pub(crate) dword: Array2<f64>,
    pub(crate) dposition: Array2<f64>,
    pub(crate) dtoken_type: Array2<f64>,
}

impl Embeddings {
    pub fn new(vocab: usize, max_position: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).unwrap();
        let mut sample = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| normal.sample(rng));
        Self {
            word: sample(vocab, hidden),
            position: sample(max_position, hidden),
            token_type: sample(1, hidden),
            ln: LayerNorm::new(hidden),
            dword: Array2::zeros((vocab, hidden)),
            dposition: Array2::zeros((max_position, hidden)),
            dtoken_type: Array2::zeros((1, hidden)),
        }
    }

    pub fn forward(
        &self,
        ids: &[usize],
        dropout_rate: f64,
        mode: &mut Mode,
    ) -> (Array2<f64>, EmbedCache) {
        let hidden = self.word.ncols();
        let mut x = Array2::zeros((ids.len(), hidden));
        for (pos, (&id, mut row)) in ids.iter().zip(x.outer_iter_mut()).enumerate() {
            for h in 0..hidden {
                row[h] = self.word[[id, h]] + self.position[[pos, h]] + self.token_type[[0, h]];
            }
        }
        let (y, ln) = self.ln.forward(&x);
        let (y, drop) = dropout(y, dropout_rate, mode);
        let cache = EmbedCache {
            ids: ids.to_vec(),
            ln,
            drop,
        };
        (y, cache)
    }

    pub fn backward(&mut self, cache: &EmbedCache, dy: &Array2<f64>) {
        let dy = dropout_backward(dy.clone(), &cache.drop);
        let dx = self.ln.backward(&cache.ln, &dy);
        for (pos, (&id, row)) in cache.ids.iter().zip(dx.outer_iter()).enumerate() {
            for (h, &g) in row.iter().enumerate() {
                self.dword[[id, h]] += g;
                self.dposition[[pos, h]] += g;
                self.dtoken_type[[0, h]] += g;
            }
        }
    }
}

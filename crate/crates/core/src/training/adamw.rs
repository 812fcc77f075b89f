//! Adaptive-moment optimizer with decoupled weight decay and a constant
//! learning rate.
//!
//! Moment state is keyed by parameter name, so it survives as long as
//! the optimizer and follows the model's visitor order. Decay applies
//! only to tensors the model marks as decayable (weight matrices and
//! embeddings); the decay term is decoupled from the adaptive step and
//! scales with the learning rate, so a zero learning rate leaves every
//! parameter untouched.

use std::collections::HashMap;

use crate::encoder::RegressionModel;

const BETA_1: f64 = 0.9;
const BETA_2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct AdamW {
    learning_rate: f64,
    weight_decay: f64,
    step_count: u64,
    state: HashMap<String, Moments>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            step_count: 0,
            state: HashMap::new(),
        }
    }

    /// Applies one update from the gradients currently accumulated in
    /// the model.
    pub fn step(&mut self, model: &mut RegressionModel) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias_1 = 1.0 - BETA_1.powi(t);
        let bias_2 = 1.0 - BETA_2.powi(t);
        let lr = self.learning_rate;
        let decay = self.weight_decay;
        let state = &mut self.state;
        model.for_each_param_mut(&mut |p| {
            let moments = state.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; p.data.len()],
                v: vec![0.0; p.data.len()],
            });
            for i in 0..p.data.len() {
                let g = p.grad[i];
                moments.m[i] = BETA_1 * moments.m[i] + (1.0 - BETA_1) * g;
                moments.v[i] = BETA_2 * moments.v[i] + (1.0 - BETA_2) * g * g;
                let m_hat = moments.m[i] / bias_1;
                let v_hat = moments.v[i] / bias_2;
                let mut update = m_hat / (v_hat.sqrt() + EPS);
                if p.decay {
                    update += decay * p.data[i];
                }
                p.data[i] -= lr * update;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, RegressionModel};

    fn tiny_model(seed: u64) -> RegressionModel {
        let config = EncoderConfig {
            hidden_size: 8,
            num_layers: 1,
            num_attention_heads: 2,
            vocab_size: 16,
            max_position: 8,
            dropout_rate: 0.0,
        };
        RegressionModel::new(config, seed).unwrap()
    }

    fn snapshot(model: &RegressionModel) -> Vec<(String, Vec<f64>)> {
        let mut params = Vec::new();
        model.for_each_param(&mut |name, _, data| params.push((name.to_string(), data.to_vec())));
        params
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut model = tiny_model(1);
        let before = snapshot(&model);
        // Nonzero gradients via a real backward pass.
        let input = crate::encoder::TokenizedInput {
            token_ids: vec![0, 5, 2, 2, 6, 2],
            attention_mask: vec![1; 6],
        };
        let (_, cache) = model.forward_item(&input, &mut crate::encoder::Mode::Eval).unwrap();
        model.backward_item(&cache, 1.0);
        let mut opt = AdamW::new(0.0, 0.01);
        opt.step(&mut model);
        assert_eq!(snapshot(&model), before);
    }

    #[test]
    fn decay_shrinks_weights_but_not_biases_without_gradient() {
        let mut model = tiny_model(2);
        model.zero_grads();
        let before = snapshot(&model);
        let mut opt = AdamW::new(0.1, 0.5);
        opt.step(&mut model);
        let after = snapshot(&model);
        let mut model_for_flags = tiny_model(2);
        let mut decay_flags = std::collections::HashMap::new();
        model_for_flags.for_each_param_mut(&mut |p| {
            decay_flags.insert(p.name.clone(), p.decay);
        });
        for ((name, old), (_, new)) in before.iter().zip(&after) {
            if decay_flags[name] {
                // Zero gradient, so the only movement is the decay term
                // data := data − lr·wd·data.
                for (o, n) in old.iter().zip(new) {
                    assert!((n - o * (1.0 - 0.1 * 0.5)).abs() < 1e-15, "{name}");
                }
            } else {
                assert_eq!(old, new, "{name}");
            }
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let run = || {
            let mut model = tiny_model(3);
            let input = crate::encoder::TokenizedInput {
                token_ids: vec![0, 4, 2, 2, 7, 2],
                attention_mask: vec![1; 6],
            };
            let mut opt = AdamW::new(1e-3, 0.01);
            for _ in 0..5 {
                model.zero_grads();
                let (raw, cache) = model
                    .forward_item(&input, &mut crate::encoder::Mode::Eval)
                    .unwrap();
                model.backward_item(&cache, 2.0 * (raw - 0.7));
                opt.step(&mut model);
            }
            snapshot(&model)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn descends_a_simple_objective() {
        let mut model = tiny_model(4);
        let input = crate::encoder::TokenizedInput {
            token_ids: vec![0, 3, 2, 2, 9, 2],
            attention_mask: vec![1; 6],
        };
        let target = 0.8;
        let loss_at = |model: &RegressionModel| {
            let (raw, _) = model
                .forward_item(&input, &mut crate::encoder::Mode::Eval)
                .unwrap();
            (raw - target) * (raw - target)
        };
        let initial = loss_at(&model);
        let mut opt = AdamW::new(1e-2, 0.0);
        for _ in 0..100 {
            model.zero_grads();
            let (raw, cache) = model
                .forward_item(&input, &mut crate::encoder::Mode::Eval)
                .unwrap();
            model.backward_item(&cache, 2.0 * (raw - target));
            opt.step(&mut model);
        }
        let trained = loss_at(&model);
        assert!(
            trained < initial / 100.0,
            "loss {initial} only reached {trained}"
        );
        assert!(trained < 1e-4);
    }
}

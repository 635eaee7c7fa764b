// SPDX-License-Identifier: Apache-2.0

//! Central finite differences against the analytic gradients.

use compgraph::model::{ModelConfig, ModelWeights};
use compgraph::train::{evaluate, loss_and_grads, make_induction_batch, Batch};
use rand_distr::{Distribution, Normal};

use super::rng;

pub const STEP: f64 = 1e-5;

pub struct TensorCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub rel_err: f64,
}

/// Three small models with `d_model = 8` and differing head/layer layouts.
pub fn small_configs() -> Vec<ModelConfig> {
    let base = ModelConfig {
        d_model: 8,
        vocab_size: 11,
        n_ctx: 8,
        ..ModelConfig::desk_default()
    };
    vec![
        ModelConfig {
            n_layers: 1,
            n_heads: 1,
            d_head: 8,
            d_mlp: 16,
            ..base.clone()
        },
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_head: 4,
            d_mlp: 12,
            ..base.clone()
        },
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_head: 2,
            d_mlp: 32,
            ..base
        },
    ]
}

/// Every tensor, LN parameters and biases included, drawn from N(0, 0.5)
/// so no gradient is vanishingly small by construction.
pub fn random_weights(config: &ModelConfig, seed: u64) -> ModelWeights<f64> {
    let mut w = ModelWeights::<f64>::zeros(config);
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 0.5).unwrap();
    for (_, mut t) in w.tensors_mut() {
        t.iter_mut().for_each(|v| *v = normal.sample(&mut r));
    }
    w
}

pub fn batch(config: &ModelConfig, seed: u64) -> Batch {
    make_induction_batch(&mut rng(seed), 3, 6, config.vocab_size).unwrap()
}

/// `||analytic - numeric|| / max(||analytic||, ||numeric||)` per tensor. A
/// tensor whose true gradient is identically zero (e.g. the key bias, which
/// shifts every score of a query equally) is compared by absolute norm.
pub fn check(config: &ModelConfig, seed: u64) -> Vec<TensorCheck> {
    let weights = random_weights(config, seed);
    let batch = batch(config, seed + 1000);
    let (_, grads) = loss_and_grads(&weights, config, &batch).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();

    let mut probe = weights.clone();
    let mut out = Vec::new();
    for (ti, (name, a)) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            let orig = nth(&mut probe, ti, i, None);
            nth(&mut probe, ti, i, Some(orig + STEP));
            let up = evaluate(&probe, config, &batch).unwrap().loss;
            nth(&mut probe, ti, i, Some(orig - STEP));
            let down = evaluate(&probe, config, &batch).unwrap().loss;
            nth(&mut probe, ti, i, Some(orig));
            numeric.push((up - down) / (2.0 * STEP));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let scale = norm(a).max(norm(&numeric));
        let rel_err = if scale < 1e-8 { norm(&diff) } else { norm(&diff) / scale };
        out.push(TensorCheck {
            name: name.clone(),
            analytic_norm: norm(a),
            rel_err,
        });
    }
    out
}

/// Reads (and with `Some`, writes) element `i` of tensor `ti` in storage order.
fn nth(w: &mut ModelWeights<f64>, ti: usize, i: usize, set: Option<f64>) -> f64 {
    let mut tensors = w.tensors_mut();
    let slot = tensors[ti].1.iter_mut().nth(i).unwrap();
    if let Some(v) = set {
        *slot = v;
    }
    *slot
}

// SPDX-License-Identifier: Apache-2.0

//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance suite. Nothing in here calls the library routine it checks.

#![allow(dead_code)]

pub mod dense;
pub mod gradcheck;
pub mod oracle;

use compgraph::graph::{ComponentGraph, Edge};
use compgraph::influence::{pair_allowed, InfluenceMatrix};
use compgraph::model::{enumerate_components, ComponentId, ModelConfig, ModelWeights};
use compgraph::train::init_weights;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed)
}

/// Random DAG on `n` nodes (edges only from lower to higher index). With
/// `tie_prone` the weights come from {0.5, 1, 2} so that equal path lengths
/// are common and exactly representable.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, density: f64, tie_prone: bool) -> ComponentGraph {
    let mut edges = Vec::new();
    for src in 0..n {
        for dst in src + 1..n {
            if rng.random::<f64>() < density {
                let weight = if tie_prone {
                    [0.5, 1.0, 2.0][rng.random_range(0..3)]
                } else {
                    // (0, 2]
                    2.0 - 2.0 * rng.random::<f64>()
                };
                edges.push(Edge { src, dst, weight });
            }
        }
    }
    ComponentGraph {
        components: (0..n).map(|layer| ComponentId::Mlp { layer }).collect(),
        edges,
        tau: 1.0,
        step: 0,
    }
}

/// Influence matrix over `config`'s components with uniform S in [-1, 1] on
/// every defined pair, plus occasional exact 1.0 and threshold values.
pub fn random_influence(rng: &mut ChaCha8Rng, config: &ModelConfig, strict: bool) -> InfluenceMatrix {
    let comps = enumerate_components(config);
    let mut values = Vec::with_capacity(comps.len() * comps.len());
    for &src in &comps {
        for &dst in &comps {
            values.push(pair_allowed(src, dst, strict).then(|| {
                match rng.random_range(0..10) {
                    0 => 1.0,
                    1 => [0.1f32, 0.3, 0.5, 0.7, 0.9][rng.random_range(0..5)],
                    _ => rng.random_range(-1.0f32..=1.0),
                }
            }));
        }
    }
    InfluenceMatrix::from_values(comps, values).unwrap()
}

pub fn active_count(n: usize, edges: &[Edge]) -> usize {
    let mut active = vec![false; n];
    for e in edges {
        active[e.src] = true;
        active[e.dst] = true;
    }
    active.iter().filter(|&&a| a).count()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Trainer init with biases, LN shifts and the unembedding (all zero at init)
/// filled with small random values, so every component writes something.
pub fn perturbed_model(config: &ModelConfig, seed: u64) -> ModelWeights<f32> {
    let mut w = init_weights(config, seed);
    let mut r = rng(seed);
    for (name, mut t) in w.tensors_mut() {
        if name.ends_with(".b") || name.contains(".b_") || name == "unembed.W_U" {
            t.iter_mut().for_each(|v| *v = r.random_range(-0.1..0.1));
        }
    }
    w
}

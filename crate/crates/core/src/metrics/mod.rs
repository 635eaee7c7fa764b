// SPDX-License-Identifier: Apache-2.0

//! Network metrics of a component graph.
//!
//! Shortest-path metrics use edge length `1 / w`, so strong influence means
//! short distance. Every per-node metric is reported over the whole
//! component universe; inactive components score zero.

mod centrality;
mod paths;

use serde::{Deserialize, Serialize};

pub use centrality::{betweenness, closeness, Direction};
pub use paths::TIE_TOLERANCE;

use crate::graph::ComponentGraph;

pub const DEFAULT_PERCENTILE: f64 = 95.0;
pub const DEFAULT_HISTOGRAM_BINS: usize = 40;
/// Edge weights live in `(0, 2]`.
pub const WEIGHT_RANGE: (f64, f64) = (0.0, 2.0);

/// `|E| / (|V_active| (|V_active| - 1))`, zero with fewer than two active nodes.
pub fn density(g: &ComponentGraph) -> f64 {
    let n = g.active_mask().iter().filter(|&&a| a).count();
    if n < 2 {
        return 0.0;
    }
    g.num_edges() as f64 / (n * (n - 1)) as f64
}

/// Weighted `(in, out)` degree per node.
pub fn strengths(g: &ComponentGraph) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); g.num_nodes()];
    for e in &g.edges {
        out[e.dst].0 += e.weight;
        out[e.src].1 += e.weight;
    }
    out
}

/// Linear-interpolation percentile at rank `p (n-1) / 100` of the sorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p * (sorted.len() - 1) as f64 / 100.0;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Flags values strictly above the `p`-th percentile.
pub fn percentile_flags(values: &[f64], p: f64) -> Vec<bool> {
    if values.is_empty() {
        return Vec::new();
    }
    let threshold = percentile(values, p);
    values.iter().map(|&v| v > threshold).collect()
}

/// Equal-width bins over `[0, 2]`, right-exclusive except the last.
pub fn weight_histogram(g: &ComponentGraph, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    if bins == 0 {
        return counts;
    }
    let (lo, hi) = WEIGHT_RANGE;
    let scale = bins as f64 / (hi - lo);
    for e in &g.edges {
        let idx = ((e.weight - lo) * scale).floor();
        let idx = if idx < 0.0 { 0 } else { (idx as usize).min(bins - 1) };
        counts[idx] += 1;
    }
    counts
}

/// `(lo, hi)` of each histogram bin.
pub fn histogram_edges(bins: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = WEIGHT_RANGE;
    let width = (hi - lo) / bins as f64;
    (0..bins)
        .map(|i| (lo + i as f64 * width, lo + (i + 1) as f64 * width))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetricRecord {
    pub step: u64,
    pub tau: f64,
    pub component: String,
    pub in_strength: f64,
    pub out_strength: f64,
    pub betweenness: f64,
    pub closeness_out: f64,
    pub closeness_in: f64,
    pub top_in: bool,
    pub top_out: bool,
    pub top_betweenness: bool,
    pub top_closeness_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetricRecord {
    pub step: u64,
    pub tau: f64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub density: f64,
    pub correct_token_logit: f64,
    #[serde(skip)]
    pub weight_histogram: Vec<usize>,
}

/// Every metric for one `(step, tau)` graph.
pub fn graph_metrics(g: &ComponentGraph, correct_token_logit: f64) -> (Vec<NodeMetricRecord>, GlobalMetricRecord) {
    let strength = strengths(g);
    let between = betweenness(g);
    let close_out = closeness(g, Direction::Out);
    let close_in = closeness(g, Direction::In);
    let ins: Vec<f64> = strength.iter().map(|s| s.0).collect();
    let outs: Vec<f64> = strength.iter().map(|s| s.1).collect();
    let top_in = percentile_flags(&ins, DEFAULT_PERCENTILE);
    let top_out = percentile_flags(&outs, DEFAULT_PERCENTILE);
    let top_between = percentile_flags(&between, DEFAULT_PERCENTILE);
    let top_close = percentile_flags(&close_out, DEFAULT_PERCENTILE);

    let nodes = g
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| NodeMetricRecord {
            step: g.step,
            tau: g.tau,
            component: c.name(),
            in_strength: ins[i],
            out_strength: outs[i],
            betweenness: between[i],
            closeness_out: close_out[i],
            closeness_in: close_in[i],
            top_in: top_in[i],
            top_out: top_out[i],
            top_betweenness: top_between[i],
            top_closeness_out: top_close[i],
        })
        .collect();
    let global = GlobalMetricRecord {
        step: g.step,
        tau: g.tau,
        num_nodes: g.active_mask().iter().filter(|&&a| a).count(),
        num_edges: g.num_edges(),
        density: density(g),
        correct_token_logit,
        weight_histogram: weight_histogram(g, DEFAULT_HISTOGRAM_BINS),
    };
    (nodes, global)
}

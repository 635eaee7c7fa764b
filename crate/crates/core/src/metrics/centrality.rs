// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::graph::ComponentGraph;
use crate::metrics::paths::dijkstra;

/// Brandes betweenness on the directed graph with lengths `1 / w`,
/// normalized by `(n-1)(n-2)` where `n` is the active node count.
/// All zeros when fewer than three nodes are active.
pub fn betweenness(g: &ComponentGraph) -> Vec<f64> {
    let n_total = g.num_nodes();
    let mut score = vec![0.0; n_total];
    let active = g.active_mask();
    let n = active.iter().filter(|&&a| a).count();
    if n < 3 {
        return score;
    }
    let adj = g.out_adjacency();
    for s in (0..n_total).filter(|&v| active[v]) {
        let sp = dijkstra(&adj, s);
        let mut delta = vec![0.0; n_total];
        for &w in sp.order.iter().rev() {
            for &v in &sp.preds[w] {
                delta[v] += sp.sigma[v] / sp.sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                score[w] += delta[w];
            }
        }
    }
    let norm = ((n - 1) * (n - 2)) as f64;
    score.iter_mut().for_each(|v| *v /= norm);
    score
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Distances from the node along outgoing edges.
    Out,
    /// Distances to the node along incoming edges.
    In,
}

/// Closeness restricted to the reachable set `R(v)` with the disconnection
/// correction:
///
/// ```text
/// C(v) = (|R|-1) / sum_{u in R} d(v,u)  *  (|R|-1) / (n-1)
/// ```
///
/// where `n` is the active node count and `R(v)` includes `v`. Zero when
/// `|R| <= 1`. With lengths `1/w` and `w <= 2`, values lie in `[0, 2]`.
pub fn closeness(g: &ComponentGraph, direction: Direction) -> Vec<f64> {
    let n_total = g.num_nodes();
    let n = g.active_mask().iter().filter(|&&a| a).count();
    let adj = match direction {
        Direction::Out => g.out_adjacency(),
        Direction::In => g.in_adjacency(),
    };
    (0..n_total)
        .map(|v| {
            if n < 2 || adj[v].is_empty() {
                return 0.0;
            }
            let sp = dijkstra(&adj, v);
            let reached = sp.order.len() - 1;
            let total: f64 = sp.order.iter().map(|&u| sp.dist[u]).sum();
            if reached == 0 || total <= 0.0 {
                return 0.0;
            }
            let r = reached as f64;
            (r / total) * (r / (n - 1) as f64)
        })
        .collect()
}

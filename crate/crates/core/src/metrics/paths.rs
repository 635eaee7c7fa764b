// SPDX-License-Identifier: Apache-2.0

//! Single-source shortest paths with edge length `1 / weight`.

/// Relative tolerance under which two path lengths count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub(crate) fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs())
}

/// Dijkstra result with shortest-path multiplicities.
pub(crate) struct ShortestPaths {
    pub dist: Vec<f64>,
    /// Number of distinct shortest paths from the source.
    pub sigma: Vec<f64>,
    pub preds: Vec<Vec<usize>>,
    /// Settled nodes in non-decreasing distance order.
    pub order: Vec<usize>,
}

/// O(n^2) Dijkstra; component graphs have a few dozen nodes. Among equally
/// distant candidates the lowest index is settled first.
pub(crate) fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> ShortestPaths {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0; n];
    let mut preds = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    let mut order = Vec::with_capacity(n);
    dist[source] = 0.0;
    sigma[source] = 1.0;
    loop {
        let next = (0..n)
            .filter(|&v| !settled[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let Some(v) = next else { break };
        settled[v] = true;
        order.push(v);
        for &(w, weight) in &adj[v] {
            if settled[w] {
                continue;
            }
            let candidate = dist[v] + 1.0 / weight;
            if dist[w].is_infinite() || (candidate < dist[w] && !ties(candidate, dist[w])) {
                dist[w] = candidate;
                sigma[w] = sigma[v];
                preds[w].clear();
                preds[w].push(v);
            } else if ties(candidate, dist[w]) {
                sigma[w] += sigma[v];
                preds[w].push(v);
            }
        }
    }
    ShortestPaths {
        dist,
        sigma,
        preds,
        order,
    }
}

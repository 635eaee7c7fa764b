// SPDX-License-Identifier: Apache-2.0

//! Brute-force graph metrics: path enumeration for betweenness,
//! Floyd-Warshall for closeness.

use compgraph::graph::Edge;

use super::active_count;

const TIE: f64 = 1e-9;

fn adjacency(n: usize, edges: &[Edge]) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.src].push((e.dst, 1.0 / e.weight));
    }
    adj
}

/// Every simple path from `s` to `t` as (length, interior nodes).
fn all_paths(adj: &[Vec<(usize, f64)>], s: usize, t: usize) -> Vec<(f64, Vec<usize>)> {
    fn walk(
        adj: &[Vec<(usize, f64)>],
        v: usize,
        t: usize,
        len: f64,
        trail: &mut Vec<usize>,
        on: &mut Vec<bool>,
        out: &mut Vec<(f64, Vec<usize>)>,
    ) {
        if v == t {
            // trail holds s .. t; interior excludes both ends
            out.push((len, trail[1..trail.len() - 1].to_vec()));
            return;
        }
        for &(u, d) in &adj[v] {
            if on[u] {
                continue;
            }
            on[u] = true;
            trail.push(u);
            walk(adj, u, t, len + d, trail, on, out);
            trail.pop();
            on[u] = false;
        }
    }
    let mut on = vec![false; adj.len()];
    on[s] = true;
    let mut out = Vec::new();
    walk(adj, s, t, 0.0, &mut vec![s], &mut on, &mut out);
    out
}

/// Normalized betweenness by enumerating all shortest s-t paths.
pub fn betweenness(n: usize, edges: &[Edge]) -> Vec<f64> {
    let mut score = vec![0.0; n];
    let active = active_count(n, edges);
    if active < 3 {
        return score;
    }
    let adj = adjacency(n, edges);
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let paths = all_paths(&adj, s, t);
            if paths.is_empty() {
                continue;
            }
            let best = paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let shortest: Vec<&Vec<usize>> = paths
                .iter()
                .filter(|p| (p.0 - best).abs() <= TIE * p.0.max(best))
                .map(|p| &p.1)
                .collect();
            let sigma = shortest.len() as f64;
            for interior in shortest {
                for &v in interior {
                    score[v] += 1.0 / sigma;
                }
            }
        }
    }
    let norm = ((active - 1) * (active - 2)) as f64;
    score.iter().map(|s| s / norm).collect()
}

/// All-pairs shortest distances with lengths `1 / w`.
pub fn floyd_warshall(n: usize, edges: &[Edge]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in edges {
        d[e.src][e.dst] = d[e.src][e.dst].min(1.0 / e.weight);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Reachable-set closeness with the `(|R|-1)/(n-1)` correction; `outward`
/// uses d(v, u), otherwise d(u, v).
pub fn closeness(n: usize, edges: &[Edge], outward: bool) -> Vec<f64> {
    let active = active_count(n, edges);
    let d = floyd_warshall(n, edges);
    (0..n)
        .map(|v| {
            if active < 2 {
                return 0.0;
            }
            let dists: Vec<f64> = (0..n)
                .filter(|&u| u != v)
                .map(|u| if outward { d[v][u] } else { d[u][v] })
                .filter(|x| x.is_finite())
                .collect();
            if dists.is_empty() {
                return 0.0;
            }
            let r = dists.len() as f64;
            let total: f64 = dists.iter().sum();
            (r / total) * (r / (active - 1) as f64)
        })
        .collect()
}

/// `(in, out)` weight sums, edge by edge.
pub fn strengths(n: usize, edges: &[Edge]) -> Vec<(f64, f64)> {
    (0..n)
        .map(|v| {
            let inw = edges.iter().filter(|e| e.dst == v).map(|e| e.weight).sum();
            let outw = edges.iter().filter(|e| e.src == v).map(|e| e.weight).sum();
            (inw, outw)
        })
        .collect()
}

pub fn density(n: usize, edges: &[Edge]) -> f64 {
    let a = active_count(n, edges);
    if a < 2 {
        0.0
    } else {
        edges.len() as f64 / (a * (a - 1)) as f64
    }
}

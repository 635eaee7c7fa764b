// SPDX-License-Identifier: Apache-2.0

//! Thresholded component graphs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{sidecar_path, InfluenceMatrix};
use crate::model::ComponentId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    /// `1 - S`, in `(1 - tau, 2]`.
    pub weight: f64,
}

/// Directed weighted graph over the fixed component universe.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentGraph {
    pub components: Vec<ComponentId>,
    pub edges: Vec<Edge>,
    pub tau: f64,
    pub step: u64,
}

/// Edge `i -> j` with weight `1 - S[i][j]` whenever `S[i][j] < tau` (strict).
pub fn build_graph(m: &InfluenceMatrix, tau: f64) -> Result<ComponentGraph> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::TauOutOfRange(tau));
    }
    // S is stored in single precision, so the threshold is compared there
    // too: a stored 0.7 is not below tau = 0.7.
    let tau32 = tau as f32;
    let edges = m
        .defined()
        .filter(|&(_, _, s)| s < tau32)
        .map(|(src, dst, s)| Edge {
            src,
            dst,
            weight: 1.0 - s as f64,
        })
        .collect();
    Ok(ComponentGraph {
        components: m.components.clone(),
        edges,
        tau,
        step: m.step,
    })
}

impl ComponentGraph {
    pub fn num_nodes(&self) -> usize {
        self.components.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Per-node flag: at least one incident edge.
    pub fn active_mask(&self) -> Vec<bool> {
        let mut active = vec![false; self.num_nodes()];
        for e in &self.edges {
            active[e.src] = true;
            active[e.dst] = true;
        }
        active
    }

    /// Outgoing adjacency lists `(dst, weight)`.
    pub fn out_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for e in &self.edges {
            adj[e.src].push((e.dst, e.weight));
        }
        adj
    }

    /// Incoming adjacency lists `(src, weight)`.
    pub fn in_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for e in &self.edges {
            adj[e.dst].push((e.src, e.weight));
        }
        adj
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.num_nodes();
        let mut indeg = vec![0usize; n];
        for e in &self.edges {
            indeg[e.dst] += 1;
        }
        let adj = self.out_adjacency();
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &(u, _) in &adj[v] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    ready.push(u);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Count and membership of nodes with in-degree + out-degree >= 1.
pub fn active_nodes(g: &ComponentGraph) -> (usize, Vec<ComponentId>) {
    let mask = g.active_mask();
    let set: Vec<ComponentId> = g
        .components
        .iter()
        .zip(&mask)
        .filter(|(_, &a)| a)
        .map(|(&c, _)| c)
        .collect();
    (set.len(), set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgesSidecar {
    pub step: u64,
    pub tau: f64,
    pub num_nodes_active: usize,
    pub num_edges: usize,
}

/// `tau` as used in file names: shortest form with at least one decimal.
pub fn format_tau(tau: f64) -> String {
    format!("{tau:?}")
}

pub fn edges_file_name(step: u64, tau: f64) -> String {
    format!("edges_{step}_{}.csv", format_tau(tau))
}

/// `src,dst,weight` plus the JSON sidecar. Weights use the shortest decimal
/// that parses back to the same `f64`.
pub fn write_edges_csv(g: &ComponentGraph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["src", "dst", "weight"]).map_err(|e| Error::csv(path, e))?;
    for e in &g.edges {
        w.write_record([
            g.components[e.src].name(),
            g.components[e.dst].name(),
            e.weight.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = EdgesSidecar {
        step: g.step,
        tau: g.tau,
        num_nodes_active: active_nodes(g).0,
        num_edges: g.num_edges(),
    };
    let sp = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::json(&sp, e))?;
    fs::write(&sp, text + "\n").map_err(|e| Error::io(&sp, e))
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    src: String,
    dst: String,
    weight: f64,
}

/// Reads an edges CSV back over a known component universe.
pub fn read_edges_csv(path: &Path, components: &[ComponentId]) -> Result<ComponentGraph> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: EdgesSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&sp, e))?;
    let index = |name: &str| -> Result<usize> {
        let id: ComponentId = name.parse()?;
        components
            .iter()
            .position(|&c| c == id)
            .ok_or_else(|| Error::Input(format!("{name} not in component universe")))
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut edges = Vec::new();
    for row in r.deserialize() {
        let row: EdgeRow = row.map_err(|e| Error::csv(path, e))?;
        edges.push(Edge {
            src: index(&row.src)?,
            dst: index(&row.dst)?,
            weight: row.weight,
        });
    }
    Ok(ComponentGraph {
        components: components.to_vec(),
        edges,
        tau: side.tau,
        step: side.step,
    })
}

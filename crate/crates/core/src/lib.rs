// SPDX-License-Identifier: Apache-2.0

//! Component-level causal influence graphs for decoder-only transformers.
//!
//! A model's embedding, attention heads and MLP blocks become the nodes of a
//! directed weighted graph. An edge `i -> j` appears when zero-ablating `i`
//! pushes the cosine similarity between `j`'s clean and ablated outputs below
//! a threshold `tau`; its weight is `1 - cosine`. The crate covers the whole
//! pipeline: forward pass with capture and ablation, a small trainer that
//! produces a checkpoint series, the checkpoint container format, influence
//! extraction, graph construction, network metrics, and CSV/SVG reporting.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod influence;
pub mod metrics;
pub mod model;
pub mod report;
pub mod train;

pub use error::{Error, Result};

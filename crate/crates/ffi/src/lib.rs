// SPDX-License-Identifier: Apache-2.0

//! C ABI over `compgraph`.
//!
//! Objects are opaque handles created by `cg_*_load` / `cg_*_compute` /
//! `cg_*_build` and released with the matching `cg_*_free`. Every fallible
//! call returns a [`CgStatus`]; on failure the message is available from
//! [`cg_last_error`] on the same thread. Outputs are written through caller
//! pointers only on success.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use compgraph::checkpoint::load_checkpoint;
use compgraph::graph::{build_graph, ComponentGraph};
use compgraph::influence::{influence_matrix, AnalysisInput, InfluenceMatrix, InfluenceOptions, Scope};
use compgraph::metrics::graph_metrics;
use compgraph::model::{ComponentId, ModelConfig, ModelWeights};
use compgraph::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    OutOfRange = 5,
    Unsupported = 6,
    Numeric = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgScope {
    AllPositions = 0,
    LastPosition = 1,
}

/// Per-component metrics at one `(step, tau)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CgNodeMetrics {
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

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CgGlobalMetrics {
    pub step: u64,
    pub tau: f64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub density: f64,
    pub correct_token_logit: f64,
}

/// A loaded checkpoint.
pub struct CgModel {
    weights: ModelWeights<f32>,
    config: ModelConfig,
    step: u64,
    components: Vec<ComponentId>,
    names: Vec<CString>,
}

/// An influence matrix for one checkpoint and token sequence.
pub struct CgInfluence {
    matrix: InfluenceMatrix,
}

/// A thresholded graph plus its metrics.
pub struct CgGraph {
    graph: ComponentGraph,
    logit: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> CgStatus {
    match e {
        Error::Io { .. } => CgStatus::Io,
        Error::BadMagic { .. }
        | Error::Truncated { .. }
        | Error::Container { .. }
        | Error::Manifest { .. }
        | Error::Json { .. }
        | Error::Csv { .. }
        | Error::Shape { .. } => CgStatus::Format,
        Error::TokenOutOfRange { .. } | Error::SequenceTooLong { .. } | Error::Index(_) | Error::TauOutOfRange(_) => {
            CgStatus::OutOfRange
        }
        Error::Unsupported(_) => CgStatus::Unsupported,
        Error::NonFiniteLoss | Error::Divergence { .. } => CgStatus::Numeric,
        _ => CgStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (CgStatus, String)>) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CgStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CgStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CgStatus, String) {
    (CgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (CgStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (CgStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the most recent failing call on this thread; empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint container.
#[no_mangle]
pub unsafe extern "C" fn cg_model_load(path: *const c_char, model_out: *mut *mut CgModel) -> CgStatus {
    guard(|| {
        let model_out = out(model_out, "model_out")?;
        let path = deref(path, "path")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (CgStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let loaded = load_checkpoint(&PathBuf::from(path)).map_err(lib_err)?;
        if !loaded.non_finite.is_empty() {
            return Err((
                CgStatus::Numeric,
                format!("non-finite values in {}", loaded.non_finite.join(", ")),
            ));
        }
        let components = compgraph::model::enumerate_components(&loaded.config);
        let names = components
            .iter()
            .map(|c| CString::new(c.name()).expect("component names have no NUL"))
            .collect();
        *model_out = Box::into_raw(Box::new(CgModel {
            weights: loaded.weights,
            config: loaded.config,
            step: loaded.step,
            components,
            names,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cg_model_free(model: *mut CgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn cg_model_step(model: *const CgModel, step_out: *mut u64) -> CgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out(step_out, "step_out")? = m.step;
        Ok(())
    })
}

/// Size of the component universe, `1 + L (H + 1)`.
#[no_mangle]
pub unsafe extern "C" fn cg_model_num_components(model: *const CgModel, count_out: *mut usize) -> CgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out(count_out, "count_out")? = m.components.len();
        Ok(())
    })
}

/// Canonical name of component `index` in stage order. The pointer is owned
/// by the model and lives as long as it does.
#[no_mangle]
pub unsafe extern "C" fn cg_model_component_name(
    model: *const CgModel,
    index: usize,
    name_out: *mut *const c_char,
) -> CgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let name = m
            .names
            .get(index)
            .ok_or_else(|| (CgStatus::OutOfRange, format!("component {index} of {}", m.names.len())))?;
        *out(name_out, "name_out")? = name.as_ptr();
        Ok(())
    })
}

/// Computes the influence matrix for `tokens[0..n_tokens]` with `target` as
/// the correct next token.
#[no_mangle]
pub unsafe extern "C" fn cg_influence_compute(
    model: *const CgModel,
    tokens: *const u32,
    n_tokens: usize,
    target: u32,
    scope: CgScope,
    strict_layer_order: bool,
    influence_out: *mut *mut CgInfluence,
) -> CgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let influence_out = out(influence_out, "influence_out")?;
        if n_tokens == 0 {
            return Err((CgStatus::InvalidArgument, "empty token sequence".into()));
        }
        if tokens.is_null() {
            return Err(null("tokens"));
        }
        let tokens = std::slice::from_raw_parts(tokens, n_tokens);
        let input = AnalysisInput {
            tokens: tokens.iter().map(|&t| t as usize).collect(),
            target: target as usize,
            scope: match scope {
                CgScope::AllPositions => Scope::AllPositions,
                CgScope::LastPosition => Scope::LastPosition,
            },
        };
        let options = InfluenceOptions {
            strict_layer_order,
            parallel: false,
        };
        let mut matrix = influence_matrix(&m.weights, &m.config, &input, options).map_err(lib_err)?;
        matrix.step = m.step;
        *influence_out = Box::into_raw(Box::new(CgInfluence { matrix }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cg_influence_free(influence: *mut CgInfluence) {
    if !influence.is_null() {
        drop(Box::from_raw(influence));
    }
}

/// `S[src][dst]`. `defined_out` is false (and `value_out` untouched) for
/// pairs outside the forward order.
#[no_mangle]
pub unsafe extern "C" fn cg_influence_get(
    influence: *const CgInfluence,
    src: usize,
    dst: usize,
    value_out: *mut f32,
    defined_out: *mut bool,
) -> CgStatus {
    guard(|| {
        let inf = deref(influence, "influence")?;
        let n = inf.matrix.len();
        if src >= n || dst >= n {
            return Err((CgStatus::OutOfRange, format!("pair ({src}, {dst}) outside {n} components")));
        }
        let defined = out(defined_out, "defined_out")?;
        let value = out(value_out, "value_out")?;
        match inf.matrix.get(src, dst) {
            Some(s) => {
                *value = s;
                *defined = true;
            }
            None => *defined = false,
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cg_influence_correct_token_logit(influence: *const CgInfluence, logit_out: *mut f64) -> CgStatus {
    guard(|| {
        let inf = deref(influence, "influence")?;
        *out(logit_out, "logit_out")? = inf.matrix.correct_token_logit;
        Ok(())
    })
}

/// Edges `i -> j` for every `S[i][j] < tau`, with `tau` in (0, 1].
#[no_mangle]
pub unsafe extern "C" fn cg_graph_build(influence: *const CgInfluence, tau: f64, graph_out: *mut *mut CgGraph) -> CgStatus {
    guard(|| {
        let inf = deref(influence, "influence")?;
        let graph_out = out(graph_out, "graph_out")?;
        let graph = build_graph(&inf.matrix, tau).map_err(lib_err)?;
        *graph_out = Box::into_raw(Box::new(CgGraph {
            graph,
            logit: inf.matrix.correct_token_logit,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cg_graph_free(graph: *mut CgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

#[no_mangle]
pub unsafe extern "C" fn cg_graph_num_edges(graph: *const CgGraph, count_out: *mut usize) -> CgStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        *out(count_out, "count_out")? = g.graph.num_edges();
        Ok(())
    })
}

/// Edge `index` as component indices and weight `1 - S`.
#[no_mangle]
pub unsafe extern "C" fn cg_graph_edge(
    graph: *const CgGraph,
    index: usize,
    src_out: *mut usize,
    dst_out: *mut usize,
    weight_out: *mut f64,
) -> CgStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        let e = g
            .graph
            .edges
            .get(index)
            .ok_or_else(|| (CgStatus::OutOfRange, format!("edge {index} of {}", g.graph.num_edges())))?;
        let (s, d, w) = (out(src_out, "src_out")?, out(dst_out, "dst_out")?, out(weight_out, "weight_out")?);
        *s = e.src;
        *d = e.dst;
        *w = e.weight;
        Ok(())
    })
}

/// Fills `nodes[0..len]` (one entry per component, stage order) and `global`.
/// `len` must equal the component count. Either output may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn cg_graph_metrics(
    graph: *const CgGraph,
    nodes: *mut CgNodeMetrics,
    len: usize,
    global: *mut CgGlobalMetrics,
) -> CgStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        let n = g.graph.num_nodes();
        if !nodes.is_null() && len != n {
            return Err((CgStatus::InvalidArgument, format!("nodes buffer holds {len}, need {n}")));
        }
        let (records, glob) = graph_metrics(&g.graph, g.logit);
        if !nodes.is_null() {
            let buf = std::slice::from_raw_parts_mut(nodes, len);
            for (slot, r) in buf.iter_mut().zip(&records) {
                *slot = CgNodeMetrics {
                    in_strength: r.in_strength,
                    out_strength: r.out_strength,
                    betweenness: r.betweenness,
                    closeness_out: r.closeness_out,
                    closeness_in: r.closeness_in,
                    top_in: r.top_in,
                    top_out: r.top_out,
                    top_betweenness: r.top_betweenness,
                    top_closeness_out: r.top_closeness_out,
                };
            }
        }
        if let Some(gl) = global.as_mut() {
            *gl = CgGlobalMetrics {
                step: glob.step,
                tau: glob.tau,
                num_nodes: glob.num_nodes,
                num_edges: glob.num_edges,
                density: glob.density,
                correct_token_logit: glob.correct_token_logit,
            };
        }
        Ok(())
    })
}

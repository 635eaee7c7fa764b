// SPDX-License-Identifier: Apache-2.0

//! The sweep driver and the SVG figures built from its CSVs.

mod heatmap;
mod svg;
mod timeseries;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, read_manifest, CheckpointManifest};
use crate::error::{Error, Result};
use crate::graph::{build_graph, edges_file_name, write_edges_csv};
use crate::influence::{influence_matrix, write_influence_csv, AnalysisInput, InfluenceOptions, Scope, TokensFile};
use crate::metrics::{graph_metrics, histogram_edges, GlobalMetricRecord, NodeMetricRecord};

pub use heatmap::{render_heatmap, HeatmapMatrix, FLAG_COLUMNS};
pub use timeseries::{render_timeseries, TIMESERIES_METRICS};

pub const DEFAULT_TAUS: [f64; 6] = [0.1, 0.3, 0.5, 0.7, 0.9, 1.0];

pub const GLOBAL_METRICS_FILE: &str = "global_metrics.csv";
pub const NODE_METRICS_FILE: &str = "node_metrics.csv";
pub const WEIGHT_HIST_FILE: &str = "weight_hist.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub manifest: PathBuf,
    pub tokens: PathBuf,
    pub taus: Vec<f64>,
    pub scope: Scope,
    pub strict_layer_order: bool,
    pub out_dir: PathBuf,
    /// Worker count; `None` uses every core.
    pub threads: Option<usize>,
    /// Process checkpoints one at a time on the calling thread.
    pub reproducible: bool,
}

impl SweepConfig {
    pub fn new(manifest: impl Into<PathBuf>, tokens: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        SweepConfig {
            manifest: manifest.into(),
            tokens: tokens.into(),
            taus: DEFAULT_TAUS.to_vec(),
            scope: Scope::AllPositions,
            strict_layer_order: false,
            out_dir: out_dir.into(),
            threads: None,
            reproducible: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::Config("empty tau list".into()));
        }
        for &t in &self.taus {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::TauOutOfRange(t));
            }
        }
        if self.taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("taus must be strictly increasing: {:?}", self.taus)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFailure {
    pub step: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTiming {
    pub step: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTotals {
    pub checkpoints: usize,
    pub succeeded: usize,
    pub influence_files: usize,
    pub edge_files: usize,
    pub global_rows: usize,
    pub node_rows: usize,
    pub seconds: f64,
    pub failures: Vec<CheckpointFailure>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: SweepConfig,
    pub per_checkpoint_seconds: Vec<CheckpointTiming>,
    pub totals: SweepTotals,
}

impl SweepSummary {
    pub fn is_complete(&self) -> bool {
        self.totals.failures.is_empty()
    }
}

struct CheckpointResult {
    step: u64,
    seconds: f64,
    per_tau: Vec<(Vec<NodeMetricRecord>, GlobalMetricRecord)>,
}

/// Runs influence, graph and metric extraction over every checkpoint in the
/// manifest and every tau. A checkpoint that fails is recorded in the summary
/// and left out of the aggregates; the remaining ones are still written.
///
/// Manifest, tokens or output-directory problems fail the whole sweep.
pub fn sweep(config: &SweepConfig) -> Result<SweepSummary> {
    let started = Instant::now();
    config.validate()?;
    let manifest = read_manifest(&config.manifest)?;
    let input = AnalysisInput::new(TokensFile::read(&config.tokens)?, config.scope);
    let influence_dir = config.out_dir.join("influence");
    let edges_dir = config.out_dir.join("edges");
    for dir in [&config.out_dir, &influence_dir, &edges_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let work = |i: usize| process_checkpoint(config, &manifest, i, &input, &influence_dir, &edges_dir);
    let results: Vec<(u64, Result<CheckpointResult>)> = if config.reproducible {
        (0..manifest.checkpoints.len())
            .map(|i| (manifest.checkpoints[i].step, work(i)))
            .collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..manifest.checkpoints.len())
                .into_par_iter()
                .map(|i| (manifest.checkpoints[i].step, work(i)))
                .collect()
        })
    };

    let mut done = Vec::new();
    let mut failures = Vec::new();
    for (step, r) in results {
        match r {
            Ok(r) => done.push(r),
            Err(e) => failures.push(CheckpointFailure {
                step,
                error: e.to_string(),
            }),
        }
    }
    // manifest steps are sorted and taus increasing, so this is (step, tau) order
    write_aggregates(&config.out_dir, &done)?;

    let summary = SweepSummary {
        config: config.clone(),
        per_checkpoint_seconds: done
            .iter()
            .map(|r| CheckpointTiming {
                step: r.step,
                seconds: r.seconds,
            })
            .collect(),
        totals: SweepTotals {
            checkpoints: manifest.checkpoints.len(),
            succeeded: done.len(),
            influence_files: done.len(),
            edge_files: done.len() * config.taus.len(),
            global_rows: done.iter().map(|r| r.per_tau.len()).sum(),
            node_rows: done.iter().flat_map(|r| &r.per_tau).map(|(n, _)| n.len()).sum(),
            seconds: started.elapsed().as_secs_f64(),
            failures,
        },
    };
    let path = config.out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

fn process_checkpoint(
    config: &SweepConfig,
    manifest: &CheckpointManifest,
    index: usize,
    input: &AnalysisInput,
    influence_dir: &Path,
    edges_dir: &Path,
) -> Result<CheckpointResult> {
    let started = Instant::now();
    let entry = &manifest.checkpoints[index];
    let path = manifest.resolve(entry, &config.manifest);
    let loaded = load_checkpoint(&path)?;
    if loaded.config != manifest.model_config {
        return Err(Error::Manifest {
            path: config.manifest.clone(),
            reason: format!("step {}: checkpoint config differs from the manifest", entry.step),
        });
    }
    if loaded.step != entry.step {
        return Err(Error::Manifest {
            path: config.manifest.clone(),
            reason: format!("entry says step {} but {} holds step {}", entry.step, path.display(), loaded.step),
        });
    }
    if !loaded.non_finite.is_empty() {
        return Err(Error::Container {
            path,
            reason: format!("non-finite values in {}", loaded.non_finite.join(", ")),
        });
    }
    let options = InfluenceOptions {
        strict_layer_order: config.strict_layer_order,
        parallel: false,
    };
    let mut m = influence_matrix(&loaded.weights, &loaded.config, input, options)?;
    m.step = entry.step;
    write_influence_csv(&m, &influence_dir.join(format!("influence_{}.csv", entry.step)))?;

    let mut per_tau = Vec::with_capacity(config.taus.len());
    for &tau in &config.taus {
        let g = build_graph(&m, tau)?;
        write_edges_csv(&g, &edges_dir.join(edges_file_name(entry.step, tau)))?;
        per_tau.push(graph_metrics(&g, m.correct_token_logit));
    }
    Ok(CheckpointResult {
        step: entry.step,
        seconds: started.elapsed().as_secs_f64(),
        per_tau,
    })
}

#[derive(Serialize)]
struct HistRow {
    step: u64,
    tau: f64,
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
}

fn write_aggregates(out: &Path, results: &[CheckpointResult]) -> Result<()> {
    let gpath = out.join(GLOBAL_METRICS_FILE);
    let npath = out.join(NODE_METRICS_FILE);
    let hpath = out.join(WEIGHT_HIST_FILE);
    let mut gw = writer(&gpath)?;
    let mut nw = writer(&npath)?;
    let mut hw = writer(&hpath)?;
    // explicit headers so an empty sweep still yields well-formed files
    gw.write_record(["step", "tau", "num_nodes", "num_edges", "density", "correct_token_logit"])
        .map_err(|e| Error::csv(&gpath, e))?;
    nw.write_record([
        "step",
        "tau",
        "component",
        "in_strength",
        "out_strength",
        "betweenness",
        "closeness_out",
        "closeness_in",
        "top_in",
        "top_out",
        "top_betweenness",
        "top_closeness_out",
    ])
    .map_err(|e| Error::csv(&npath, e))?;
    hw.write_record(["step", "tau", "bin_lo", "bin_hi", "count"])
        .map_err(|e| Error::csv(&hpath, e))?;

    for r in results {
        for (nodes, global) in &r.per_tau {
            gw.serialize(global).map_err(|e| Error::csv(&gpath, e))?;
            for n in nodes {
                nw.serialize(n).map_err(|e| Error::csv(&npath, e))?;
            }
            let bins = histogram_edges(global.weight_histogram.len());
            for (&(bin_lo, bin_hi), &count) in bins.iter().zip(&global.weight_histogram) {
                let row = HistRow {
                    step: global.step,
                    tau: global.tau,
                    bin_lo,
                    bin_hi,
                    count,
                };
                hw.serialize(row).map_err(|e| Error::csv(&hpath, e))?;
            }
        }
    }
    gw.flush().map_err(|e| Error::io(&gpath, e))?;
    nw.flush().map_err(|e| Error::io(&npath, e))?;
    hw.flush().map_err(|e| Error::io(&hpath, e))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))
}

/// Renders every timeseries and the four flag heatmaps at `tau` into
/// `out_dir/figures`. Returns the written paths.
pub fn write_figures(out_dir: &Path, tau: f64) -> Result<Vec<PathBuf>> {
    let figures = out_dir.join("figures");
    fs::create_dir_all(&figures).map_err(|e| Error::io(&figures, e))?;
    let mut written = Vec::new();
    for metric in TIMESERIES_METRICS {
        let path = figures.join(format!("timeseries_{metric}.svg"));
        render_timeseries(&out_dir.join(GLOBAL_METRICS_FILE), metric, &path)?;
        written.push(path);
    }
    for flag in FLAG_COLUMNS {
        let path = figures.join(format!("heatmap_{flag}_{tau:?}.svg"));
        render_heatmap(&out_dir.join(NODE_METRICS_FILE), flag, tau, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads `global_metrics.csv`.
pub fn read_global_metrics(path: &Path) -> Result<Vec<GlobalMetricRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// Reads `node_metrics.csv`.
pub fn read_node_metrics(path: &Path) -> Result<Vec<NodeMetricRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_validation() {
        let mut c = SweepConfig::new("m.json", "t.json", "out");
        c.validate().unwrap();
        c.taus = vec![0.5, 0.5];
        assert!(c.validate().is_err());
        c.taus = vec![0.7, 0.3];
        assert!(c.validate().is_err());
        c.taus = vec![0.0, 0.3];
        assert!(matches!(c.validate(), Err(Error::TauOutOfRange(_))));
        c.taus = vec![0.3, 1.5];
        assert!(c.validate().is_err());
        c.taus = vec![];
        assert!(c.validate().is_err());
    }
}

// SPDX-License-Identifier: Apache-2.0

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use compgraph::model::ModelConfig;
use compgraph::report::{
    read_global_metrics, read_node_metrics, render_heatmap, render_timeseries, sweep, HeatmapMatrix, SweepConfig,
    SweepSummary,
};
use compgraph::train::{train, TrainConfig, TrainReport};

fn tiny_run(dir: &Path) -> TrainReport {
    let model = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 16,
        d_head: 8,
        d_mlp: 32,
        vocab_size: 16,
        n_ctx: 16,
        ..ModelConfig::desk_default()
    };
    let config = TrainConfig {
        model,
        steps: 40,
        batch_size: 4,
        seq_len: 16,
        checkpoint_schedule: vec![0, 20, 40],
        ..TrainConfig::desk_default(dir)
    };
    train(&config).unwrap()
}

fn run_sweep(report: &TrainReport, out: &Path, reproducible: bool) -> SweepSummary {
    let mut c = SweepConfig::new(&report.manifest_path, &report.tokens_path, out);
    c.reproducible = reproducible;
    sweep(&c).unwrap()
}

/// Relative path -> bytes for every CSV and SVG under `dir`.
fn artifacts(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|x| x.to_str()), Some("csv" | "svg")) {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Tag balance check: one root element, every open tag closed in order.
fn well_formed(svg: &str) -> bool {
    let body = svg.trim_start_matches(|c| c != '>').get(1..).unwrap_or("");
    let mut stack: Vec<String> = Vec::new();
    let mut roots = 0;
    let mut rest = body;
    while let Some(start) = rest.find('<') {
        let end = match rest[start..].find('>') {
            Some(e) => start + e,
            None => return false,
        };
        let tag = &rest[start + 1..end];
        if let Some(name) = tag.strip_prefix('/') {
            if stack.pop().as_deref() != Some(name.trim()) {
                return false;
            }
        } else {
            let name = tag.split_whitespace().next().unwrap_or("").trim_end_matches('/').to_string();
            if stack.is_empty() {
                roots += 1;
            }
            if !tag.ends_with('/') {
                stack.push(name);
            }
        }
        rest = &rest[end + 1..];
    }
    stack.is_empty() && roots == 1
}

#[test]
fn three_checkpoints_six_taus() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(&dir.path().join("run"));
    let out = dir.path().join("sweep");
    let summary = run_sweep(&report, &out, true);
    assert!(summary.is_complete());
    assert_eq!(summary.totals.influence_files, 3);
    assert_eq!(summary.totals.edge_files, 18);
    assert_eq!(fs::read_dir(out.join("influence")).unwrap().count(), 3 * 2);
    assert_eq!(fs::read_dir(out.join("edges")).unwrap().count(), 18 * 2);
    assert!(out.join("edges/edges_20_0.7.csv").exists());
    assert!(out.join("edges/edges_40_1.0.json").exists());

    let global = read_global_metrics(&out.join("global_metrics.csv")).unwrap();
    assert_eq!(global.len(), 18);
    let nodes = read_node_metrics(&out.join("node_metrics.csv")).unwrap();
    assert_eq!(nodes.len(), 18 * 7);
    let hist = fs::read_to_string(out.join("weight_hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 18 * 40);
    let keys: Vec<(u64, f64)> = global.iter().map(|g| (g.step, g.tau)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    assert_eq!(keys, sorted);

    let summary_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for key in ["config", "per_checkpoint_seconds", "totals"] {
        assert!(summary_json.get(key).is_some(), "summary.json lacks {key}");
    }
}

#[test]
fn reproducible_and_parallel_sweeps_agree() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(&dir.path().join("run"));
    let outs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    run_sweep(&report, &outs[0], true);
    run_sweep(&report, &outs[1], true);
    run_sweep(&report, &outs[2], false);
    for out in &outs {
        render_timeseries(&out.join("global_metrics.csv"), "num_edges", &out.join("ts.svg")).unwrap();
        render_heatmap(&out.join("node_metrics.csv"), "top_in", 0.7, &out.join("hm.svg")).unwrap();
    }
    let a = artifacts(&outs[0]);
    assert_eq!(a.len(), 3 + 18 + 3 + 2);
    assert_eq!(a, artifacts(&outs[1]));
    assert_eq!(a, artifacts(&outs[2]));
}

#[test]
fn failed_checkpoint_is_skipped_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(&dir.path().join("run"));
    let victim = dir.path().join("run/ckpt_000020.cgt");
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();

    let out = dir.path().join("sweep");
    let summary = run_sweep(&report, &out, true);
    assert!(!summary.is_complete());
    assert_eq!(summary.totals.failures.len(), 1);
    assert_eq!(summary.totals.failures[0].step, 20);
    assert!(summary.totals.failures[0].error.contains("truncated"), "{}", summary.totals.failures[0].error);
    let global = read_global_metrics(&out.join("global_metrics.csv")).unwrap();
    assert_eq!(global.len(), 12);
    assert!(global.iter().all(|g| g.step != 20));
}

#[test]
fn figures() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(&dir.path().join("run"));
    let out = dir.path().join("sweep");
    run_sweep(&report, &out, true);
    let gcsv = out.join("global_metrics.csv");
    let ncsv = out.join("node_metrics.csv");

    let ts = out.join("num_edges.svg");
    render_timeseries(&gcsv, "num_edges", &ts).unwrap();
    let text = fs::read_to_string(&ts).unwrap();
    assert!(well_formed(&text));
    assert_eq!(text.matches(r#"class="series""#).count(), 6);
    assert_eq!(text.matches(r#"class="logit""#).count(), 1);
    assert!(text.contains("tau=0.7"));
    let err = render_timeseries(&gcsv, "modularity", &ts).unwrap_err();
    assert!(err.to_string().contains("unknown metric"));

    let empty = out.join("empty.csv");
    fs::write(&empty, "step,tau,num_nodes,num_edges,density,correct_token_logit\n").unwrap();
    let err = render_timeseries(&empty, "density", &ts).unwrap_err();
    assert!(err.to_string().contains("no rows"));

    let hm = out.join("hm.svg");
    render_heatmap(&ncsv, "top_out", 0.7, &hm).unwrap();
    let text = fs::read_to_string(&hm).unwrap();
    assert!(well_formed(&text));
    let records = read_node_metrics(&ncsv).unwrap();
    let matrix = HeatmapMatrix::from_records(&records, "top_out", 0.7).unwrap();
    assert_eq!(matrix.rows.len(), 7);
    assert_eq!(matrix.steps, vec![0, 20, 40]);
    assert_eq!(matrix.rows.first().unwrap(), "emb");
    assert_eq!(matrix.rows.last().unwrap(), "mlp_1");
    assert_eq!(text.matches("<rect").count(), matrix.num_flagged());
    assert!(render_heatmap(&ncsv, "top_out", 0.6, &hm).is_err());
}

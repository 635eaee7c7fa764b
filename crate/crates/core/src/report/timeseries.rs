// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::GlobalMetricRecord;
use crate::report::read_global_metrics;
use crate::report::svg::{linear_ticks, tick_label, Svg};

pub const TIMESERIES_METRICS: [&str; 3] = ["num_nodes", "num_edges", "density"];

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const LOGIT_COLOR: &str = "#808080";

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = WIDTH - 80.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = HEIGHT - 50.0;

fn metric_value(r: &GlobalMetricRecord, metric: &str) -> f64 {
    match metric {
        "num_nodes" => r.num_nodes as f64,
        "num_edges" => r.num_edges as f64,
        _ => r.density,
    }
}

fn log_step(step: u64) -> f64 {
    (step as f64 + 1.0).log10()
}

/// Line chart of one global metric against `log10(step + 1)`, one line per
/// tau, with the correct-token logit on a second axis.
pub fn render_timeseries(global_csv: &Path, metric: &str, out: &Path) -> Result<()> {
    if !TIMESERIES_METRICS.contains(&metric) {
        return Err(Error::Input(format!(
            "unknown metric {metric:?}; expected one of {}",
            TIMESERIES_METRICS.join(", ")
        )));
    }
    let rows = read_global_metrics(global_csv)?;
    if rows.is_empty() {
        return Err(Error::Input(format!("{}: no rows", global_csv.display())));
    }

    // keyed by the bit pattern so float taus order and group exactly
    let mut series: BTreeMap<u64, (f64, Vec<(u64, f64)>)> = BTreeMap::new();
    let mut logit: BTreeMap<u64, f64> = BTreeMap::new();
    for r in &rows {
        series
            .entry(r.tau.to_bits())
            .or_insert_with(|| (r.tau, Vec::new()))
            .1
            .push((r.step, metric_value(r, metric)));
        logit.entry(r.step).or_insert(r.correct_token_logit);
    }
    let mut series: Vec<(f64, Vec<(u64, f64)>)> = series.into_values().collect();
    series.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (_, pts) in &mut series {
        pts.sort_by_key(|p| p.0);
    }

    let x_max = log_step(*logit.keys().next_back().expect("non-empty")).max(1.0);
    let y_max = rows.iter().map(|r| metric_value(r, metric)).fold(0.0, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let (l_min, l_max) = logit.values().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (l_min, l_max) = if l_max - l_min < 1e-12 { (l_min - 1.0, l_max + 1.0) } else { (l_min, l_max) };

    let px = |x: f64| LEFT + (RIGHT - LEFT) * x / x_max;
    let py = |y: f64| BOTTOM - (BOTTOM - TOP) * y / y_max;
    let py_logit = |y: f64| BOTTOM - (BOTTOM - TOP) * (y - l_min) / (l_max - l_min);

    let mut svg = Svg::new(WIDTH, HEIGHT);
    svg.text(WIDTH / 2.0, 20.0, "middle", &format!("{metric} by training step"));

    // axes
    svg.line(LEFT, BOTTOM, RIGHT, BOTTOM, "black");
    svg.line(LEFT, TOP, LEFT, BOTTOM, "black");
    svg.line(RIGHT, TOP, RIGHT, BOTTOM, LOGIT_COLOR);
    let mut decade = 1u64;
    svg.line(px(0.0), BOTTOM, px(0.0), BOTTOM + 4.0, "black");
    svg.text(px(0.0), BOTTOM + 16.0, "middle", "0");
    while log_step(decade) <= x_max + 1e-12 {
        let x = px((decade as f64).log10());
        svg.line(x, BOTTOM, x, BOTTOM + 4.0, "black");
        svg.text(x, BOTTOM + 16.0, "middle", &decade.to_string());
        decade *= 10;
    }
    svg.text((LEFT + RIGHT) / 2.0, HEIGHT - 12.0, "middle", "step (log10(step+1) scale)");
    for t in linear_ticks(0.0, y_max) {
        svg.line(LEFT - 4.0, py(t), LEFT, py(t), "black");
        svg.text(LEFT - 6.0, py(t) + 4.0, "end", &tick_label(round_tick(t)));
    }
    svg.rotated_text(18.0, (TOP + BOTTOM) / 2.0, -90.0, "middle", metric);
    for t in linear_ticks(l_min, l_max) {
        svg.line(RIGHT, py_logit(t), RIGHT + 4.0, py_logit(t), LOGIT_COLOR);
        svg.text(RIGHT + 6.0, py_logit(t) + 4.0, "start", &tick_label(round_tick(t)));
    }
    svg.rotated_text(WIDTH - 14.0, (TOP + BOTTOM) / 2.0, 90.0, "middle", "correct-token logit");

    // data
    let logit_pts: Vec<(f64, f64)> = logit.iter().map(|(&s, &v)| (px(log_step(s)), py_logit(v))).collect();
    svg.polyline(&logit_pts, LOGIT_COLOR, true, "logit");
    for (i, (_, pts)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = pts.iter().map(|&(s, v)| (px(log_step(s)), py(v))).collect();
        svg.polyline(&pts, PALETTE[i % PALETTE.len()], false, "series");
    }

    // legend
    let mut x = LEFT;
    for (i, (tau, _)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.line(x, 40.0, x + 18.0, 40.0, color);
        svg.text(x + 22.0, 44.0, "start", &format!("tau={tau}"));
        x += 78.0;
    }
    svg.line(x, 40.0, x + 18.0, 40.0, LOGIT_COLOR);
    svg.text(x + 22.0, 44.0, "start", "logit");
    svg.save(out)
}

fn round_tick(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::NodeMetricRecord;
use crate::model::ComponentId;
use crate::report::read_node_metrics;
use crate::report::svg::Svg;

pub const FLAG_COLUMNS: [&str; 4] = ["top_in", "top_out", "top_betweenness", "top_closeness_out"];

const CELL_W: f64 = 16.0;
const CELL_H: f64 = 12.0;
const LEFT: f64 = 90.0;
const TOP: f64 = 40.0;
const FILL: &str = "#c0392b";

/// Component × step grid of one percentile flag at one tau.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapMatrix {
    /// Canonical names in stage order.
    pub rows: Vec<String>,
    pub steps: Vec<u64>,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<bool>>,
    pub metric: String,
    pub tau: f64,
}

fn flag(r: &NodeMetricRecord, column: &str) -> bool {
    match column {
        "top_in" => r.top_in,
        "top_out" => r.top_out,
        "top_betweenness" => r.top_betweenness,
        _ => r.top_closeness_out,
    }
}

impl HeatmapMatrix {
    pub fn from_records(records: &[NodeMetricRecord], metric: &str, tau: f64) -> Result<Self> {
        if !FLAG_COLUMNS.contains(&metric) {
            return Err(Error::Input(format!(
                "unknown flag column {metric:?}; expected one of {}",
                FLAG_COLUMNS.join(", ")
            )));
        }
        let selected: Vec<&NodeMetricRecord> = records.iter().filter(|r| r.tau == tau).collect();
        if selected.is_empty() {
            return Err(Error::Input(format!("tau {tau} not present in node metrics")));
        }
        let mut components = BTreeSet::new();
        let mut steps = BTreeSet::new();
        let mut lookup = BTreeMap::new();
        for r in &selected {
            let id: ComponentId = r.component.parse()?;
            components.insert(id);
            steps.insert(r.step);
            lookup.insert((id, r.step), flag(r, metric));
        }
        let steps: Vec<u64> = steps.into_iter().collect();
        let cells = components
            .iter()
            .map(|&c| steps.iter().map(|&s| lookup.get(&(c, s)).copied().unwrap_or(false)).collect())
            .collect();
        Ok(HeatmapMatrix {
            rows: components.iter().map(|c| c.name()).collect(),
            steps,
            cells,
            metric: metric.to_string(),
            tau,
        })
    }

    pub fn num_flagged(&self) -> usize {
        self.cells.iter().flatten().filter(|&&c| c).count()
    }

    /// Columns that get a step label: the first column in each decade of `step + 1`.
    pub fn labelled_columns(&self) -> Vec<usize> {
        let mut last = None;
        let mut out = Vec::new();
        for (i, &s) in self.steps.iter().enumerate() {
            let decade = (s as f64 + 1.0).log10().floor() as i64;
            if last != Some(decade) {
                out.push(i);
                last = Some(decade);
            }
        }
        out
    }

    /// One `rect` per flagged cell; the grid itself is drawn with lines.
    pub fn to_svg(&self) -> String {
        self.svg().finish()
    }

    fn svg(&self) -> Svg {
        let (nr, nc) = (self.rows.len() as f64, self.steps.len() as f64);
        let width = LEFT + nc * CELL_W + 20.0;
        let height = TOP + nr * CELL_H + 60.0;
        let mut svg = Svg::new(width, height);
        svg.text(LEFT, 20.0, "start", &format!("{} > 95th percentile, tau={}", self.metric, self.tau));
        for (r, row) in self.cells.iter().enumerate() {
            for (c, &on) in row.iter().enumerate() {
                if on {
                    svg.rect(LEFT + c as f64 * CELL_W, TOP + r as f64 * CELL_H, CELL_W, CELL_H, FILL, "cell");
                }
            }
        }
        for r in 0..=self.rows.len() {
            let y = TOP + r as f64 * CELL_H;
            svg.line(LEFT, y, LEFT + nc * CELL_W, y, "#cccccc");
        }
        for c in 0..=self.steps.len() {
            let x = LEFT + c as f64 * CELL_W;
            svg.line(x, TOP, x, TOP + nr * CELL_H, "#cccccc");
        }
        for (r, name) in self.rows.iter().enumerate() {
            svg.text(LEFT - 4.0, TOP + (r as f64 + 0.8) * CELL_H, "end", name);
        }
        let base = TOP + nr * CELL_H + 12.0;
        for c in self.labelled_columns() {
            let x = LEFT + (c as f64 + 0.5) * CELL_W;
            svg.rotated_text(x, base, 45.0, "start", &self.steps[c].to_string());
        }
        svg
    }
}

/// Reads `node_metrics.csv` and draws the flag grid for one tau.
pub fn render_heatmap(node_csv: &Path, metric: &str, tau: f64, out: &Path) -> Result<()> {
    let records = read_node_metrics(node_csv)?;
    HeatmapMatrix::from_records(&records, metric, tau)?.svg().save(out)
}

// SPDX-License-Identifier: Apache-2.0

//! Causal influence between components, measured by zero-ablation.
//!
//! One clean pass caches every component's residual contribution. Then each
//! component `i` is ablated in turn and, for every later component `j`, the
//! cosine similarity between `j`'s clean and ablated contributions becomes
//! `S[i][j]`. That makes `1 + |V|` forward passes per input.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{correct_token_logit, enumerate_components, forward, ComponentId, ModelConfig, ModelWeights};

/// Cosine similarity, with 0 when either norm is below `1e-12`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(cosine_iter(a.iter().copied().zip(b.iter().copied())))
}

fn cosine_iter(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in pairs {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn cosine_rows(a: ArrayView1<f32>, b: ArrayView1<f32>) -> f64 {
    cosine_iter(a.iter().zip(b.iter()).map(|(&x, &y)| (x as f64, y as f64)))
}

/// Which part of a `[seq_len × d_model]` contribution is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Flatten the whole contribution.
    #[default]
    AllPositions,
    /// Only the final position's row.
    LastPosition,
}

/// `tokens.json`: `{"tokens": [...], "target": id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokensFile {
    pub tokens: Vec<usize>,
    pub target: usize,
}

impl TokensFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: TokensFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if parsed.tokens.is_empty() {
            return Err(Error::Input(format!("{}: empty token list", path.display())));
        }
        Ok(parsed)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisInput {
    pub tokens: Vec<usize>,
    pub target: usize,
    pub scope: Scope,
}

impl AnalysisInput {
    pub fn new(file: TokensFile, scope: Scope) -> Self {
        AnalysisInput {
            tokens: file.tokens,
            target: file.target,
            scope,
        }
    }

    fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Input("empty token sequence".into()));
        }
        if self.target >= config.vocab_size {
            return Err(Error::Index(format!(
                "target {} >= vocab_size {}",
                self.target, config.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InfluenceOptions {
    /// Only allow pairs whose source layer is strictly below the destination
    /// layer (the embedding counts as layer -1). Excludes attn -> mlp within
    /// one layer.
    pub strict_layer_order: bool,
    /// Run the ablated passes on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

/// Whether `src -> dst` is a pair the matrix defines.
pub fn pair_allowed(src: ComponentId, dst: ComponentId, strict_layer_order: bool) -> bool {
    if src.stage() >= dst.stage() {
        return false;
    }
    if strict_layer_order {
        let layer = |c: ComponentId| c.layer().map_or(-1, |l| l as i64);
        return layer(src) < layer(dst);
    }
    true
}

/// Cosine similarities `S[src][dst]` over allowed ordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub components: Vec<ComponentId>,
    /// Row-major `n × n`; `None` where the pair is not defined.
    values: Vec<Option<f32>>,
    pub step: u64,
    pub tokens: Vec<usize>,
    pub target: usize,
    pub correct_token_logit: f64,
}

impl InfluenceMatrix {
    /// Assemble from explicit values (rows are sources).
    pub fn from_values(components: Vec<ComponentId>, values: Vec<Option<f32>>) -> Result<Self> {
        let n = components.len();
        if values.len() != n * n {
            return Err(Error::LengthMismatch(values.len(), n * n));
        }
        for (k, v) in values.iter().enumerate() {
            let (i, j) = (k / n, k % n);
            if let Some(s) = v {
                if components[i].stage() >= components[j].stage() {
                    return Err(Error::Input(format!(
                        "pair {} -> {} is not forward in computation order",
                        components[i], components[j]
                    )));
                }
                if !(-1.0..=1.0).contains(s) {
                    return Err(Error::Input(format!("cosine {s} outside [-1, 1]")));
                }
            }
        }
        Ok(InfluenceMatrix {
            components,
            values,
            step: 0,
            tokens: Vec::new(),
            target: 0,
            correct_token_logit: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, src: usize, dst: usize) -> Option<f32> {
        self.values[src * self.len() + dst]
    }

    /// Defined entries as `(src, dst, S)`, row-major.
    pub fn defined(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        let n = self.len();
        self.values
            .iter()
            .enumerate()
            .filter_map(move |(k, v)| v.map(|s| (k / n, k % n, s)))
    }

    pub fn num_defined(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// One clean pass plus one ablated pass per component.
pub fn influence_matrix(
    weights: &ModelWeights<f32>,
    config: &ModelConfig,
    input: &AnalysisInput,
    options: InfluenceOptions,
) -> Result<InfluenceMatrix> {
    input.validate(config)?;
    let components = enumerate_components(config);
    let n = components.len();
    let clean = forward(weights, config, &input.tokens, None)?;
    let logit = correct_token_logit(&clean, input.target, None)?;

    let row = |i: usize| -> Result<Vec<Option<f32>>> {
        let src = components[i];
        let ablated = forward(weights, config, &input.tokens, Some(src))?;
        Ok(components
            .iter()
            .enumerate()
            .map(|(j, &dst)| {
                pair_allowed(src, dst, options.strict_layer_order).then(|| {
                    similarity(&clean.contributions[j], &ablated.contributions[j], input.scope) as f32
                })
            })
            .collect())
    };
    let rows: Vec<Vec<Option<f32>>> = if options.parallel {
        (0..n).into_par_iter().map(row).collect::<Result<_>>()?
    } else {
        (0..n).map(row).collect::<Result<_>>()?
    };

    Ok(InfluenceMatrix {
        components,
        values: rows.into_iter().flatten().collect(),
        step: 0,
        tokens: input.tokens.clone(),
        target: input.target,
        correct_token_logit: logit,
    })
}

fn similarity(clean: &Array2<f32>, ablated: &Array2<f32>, scope: Scope) -> f64 {
    match scope {
        Scope::AllPositions => cosine_iter(clean.iter().zip(ablated.iter()).map(|(&x, &y)| (x as f64, y as f64))),
        Scope::LastPosition => {
            let last = clean.nrows() - 1;
            cosine_rows(clean.row(last), ablated.row(last))
        }
    }
}

/// JSON written next to `influence_*.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSidecar {
    pub step: u64,
    pub tau_independent: bool,
    pub correct_token_logit: f64,
    /// Canonical names of the full component universe, in stage order.
    pub components: Vec<String>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// `src,dst,cosine`, one row per defined pair, plus the JSON sidecar.
pub fn write_influence_csv(m: &InfluenceMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["src", "dst", "cosine"]).map_err(|e| Error::csv(path, e))?;
    for (i, j, s) in m.defined() {
        w.write_record([m.components[i].name(), m.components[j].name(), s.to_string()])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = InfluenceSidecar {
        step: m.step,
        tau_independent: true,
        correct_token_logit: m.correct_token_logit,
        components: m.components.iter().map(|c| c.name()).collect(),
    };
    let sp = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).map_err(|e| Error::json(&sp, e))?;
    fs::write(&sp, text + "\n").map_err(|e| Error::io(&sp, e))
}

#[derive(Debug, Deserialize)]
struct InfluenceRow {
    src: String,
    dst: String,
    cosine: f32,
}

/// Inverse of [`write_influence_csv`]. Token data is not stored and comes back empty.
pub fn read_influence_csv(path: &Path) -> Result<InfluenceMatrix> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: InfluenceSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&sp, e))?;
    let components: Vec<ComponentId> = side.components.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let n = components.len();
    let index = |name: &str| -> Result<usize> {
        let id: ComponentId = name.parse()?;
        components
            .iter()
            .position(|&c| c == id)
            .ok_or_else(|| Error::Input(format!("{name} not in sidecar component list")))
    };
    let mut values = vec![None; n * n];
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in r.deserialize() {
        let row: InfluenceRow = row.map_err(|e| Error::csv(path, e))?;
        let (i, j) = (index(&row.src)?, index(&row.dst)?);
        if values[i * n + j].replace(row.cosine).is_some() {
            return Err(Error::Input(format!("duplicate pair {} -> {}", row.src, row.dst)));
        }
    }
    let mut m = InfluenceMatrix::from_values(components, values)?;
    m.step = side.step;
    m.correct_token_logit = side.correct_token_logit;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockStyle, PosStyle};
    use ndarray::Axis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_basics() {
        let a = [1.0, -2.0, 3.0];
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(1, 2))));
    }

    fn model(seed: u64) -> (ModelConfig, ModelWeights<f32>) {
        let config = ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_head: 4,
            d_mlp: 16,
            vocab_size: 10,
            n_ctx: 8,
            block_style: BlockStyle::PrelnSequential,
            pos_style: PosStyle::LearnedAbsolute,
            ..ModelConfig::desk_default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = ModelWeights::<f32>::zeros(&config);
        for (_, mut t) in w.tensors_mut() {
            t.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        }
        (config, w)
    }

    fn input() -> AnalysisInput {
        AnalysisInput {
            tokens: vec![1, 5, 2, 1, 5],
            target: 2,
            scope: Scope::AllPositions,
        }
    }

    #[test]
    fn defined_pairs_follow_stage_rule() {
        let (config, w) = model(1);
        let m = influence_matrix(&w, &config, &input(), InfluenceOptions::default()).unwrap();
        // 6 components with stages 0,1,1,2,3,3,4 -> count pairs with stage(i) < stage(j)
        let stages: Vec<usize> = m.components.iter().map(|c| c.stage()).collect();
        let mut expected = 0;
        for &a in &stages {
            for &b in &stages {
                expected += usize::from(a < b);
            }
        }
        assert_eq!(m.num_defined(), expected);
        for i in 0..m.len() {
            for j in 0..m.len() {
                let allowed = m.components[i].stage() < m.components[j].stage();
                assert_eq!(m.get(i, j).is_some(), allowed);
            }
        }
        // last component has an empty row
        assert!((0..m.len()).all(|j| m.get(m.len() - 1, j).is_none()));
    }

    #[test]
    fn strict_mode_drops_same_layer_pairs() {
        let (config, w) = model(2);
        let opts = InfluenceOptions {
            strict_layer_order: true,
            parallel: false,
        };
        let m = influence_matrix(&w, &config, &input(), opts).unwrap();
        let head = ComponentId::AttnHead { layer: 0, head: 1 }.index(&config);
        let mlp0 = ComponentId::Mlp { layer: 0 }.index(&config);
        let mlp1 = ComponentId::Mlp { layer: 1 }.index(&config);
        assert!(m.get(head, mlp0).is_none());
        assert!(m.get(head, mlp1).is_some());
        assert!(m.get(0, mlp0).is_some());
    }

    #[test]
    fn zero_source_row_is_all_ones() {
        let (config, mut w) = model(3);
        w.layers[0].w_o.index_axis_mut(Axis(0), 0).fill(0.0);
        let m = influence_matrix(&w, &config, &input(), InfluenceOptions::default()).unwrap();
        let src = ComponentId::AttnHead { layer: 0, head: 0 }.index(&config);
        let row: Vec<f32> = (0..m.len()).filter_map(|j| m.get(src, j)).collect();
        assert!(!row.is_empty());
        assert!(row.iter().all(|&s| s == 1.0), "{row:?}");
    }

    #[test]
    fn parallel_matches_sequential() {
        let (config, w) = model(4);
        let a = influence_matrix(&w, &config, &input(), InfluenceOptions::default()).unwrap();
        let b = influence_matrix(
            &w,
            &config,
            &input(),
            InfluenceOptions {
                parallel: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn last_position_scope_differs() {
        let (config, w) = model(5);
        let all = influence_matrix(&w, &config, &input(), InfluenceOptions::default()).unwrap();
        let last_input = AnalysisInput {
            scope: Scope::LastPosition,
            ..input()
        };
        let last = influence_matrix(&w, &config, &last_input, InfluenceOptions::default()).unwrap();
        assert_eq!(all.num_defined(), last.num_defined());
        assert_ne!(all, last);
    }

    #[test]
    fn csv_roundtrip_three_components() {
        let comps = vec![
            ComponentId::Emb,
            ComponentId::AttnHead { layer: 0, head: 0 },
            ComponentId::Mlp { layer: 0 },
        ];
        let mut values = vec![None; 9];
        values[1] = Some(0.123_456_79_f32);
        values[2] = Some(-0.75);
        values[5] = Some(1.0 / 3.0);
        let mut m = InfluenceMatrix::from_values(comps, values).unwrap();
        m.step = 128;
        m.correct_token_logit = 4.25;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("influence_128.csv");
        write_influence_csv(&m, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "src,dst,cosine");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("emb,attn.z.0.0,"));
        assert!(lines[3].starts_with("attn.z.0.0,mlp_0,"));
        let back = read_influence_csv(&path).unwrap();
        assert_eq!(back.components, m.components);
        assert_eq!(back.step, 128);
        assert_eq!(back.correct_token_logit, 4.25);
        assert!((0..9).all(|k| back.get(k / 3, k % 3) == m.get(k / 3, k % 3)));
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side["tau_independent"], true);
    }

    #[test]
    fn from_values_rejects_backward_pairs() {
        let comps = vec![ComponentId::Emb, ComponentId::Mlp { layer: 0 }];
        let values = vec![None, None, Some(0.5), None];
        assert!(InfluenceMatrix::from_values(comps, values).is_err());
    }
}

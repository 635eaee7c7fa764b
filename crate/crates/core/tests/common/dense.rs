// SPDX-License-Identifier: Apache-2.0

//! Scalar-loop transformer forward written straight from the block
//! definitions, plus hand-weighted tiny models to feed it.

use compgraph::model::{BlockStyle, ComponentId, ModelConfig, ModelWeights, PosStyle};

type Mat = Vec<Vec<f64>>;

pub struct DenseRun {
    /// Stage order, each `[seq × d_model]`.
    pub contributions: Vec<Mat>,
    pub logits: Mat,
}

fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

fn layer_norm(x: &Mat, w: &[f64], b: &[f64], eps: f64) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * w[i] + b[i])
                .collect()
        })
        .collect()
}

fn gelu_tanh(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

/// `x[seq × d] · W[d × k] + bias`, with `W` read through an index closure.
fn project(x: &Mat, k: usize, w: impl Fn(usize, usize) -> f64, bias: impl Fn(usize) -> f64) -> Mat {
    x.iter()
        .map(|row| {
            (0..k)
                .map(|j| bias(j) + row.iter().enumerate().map(|(i, v)| v * w(i, j)).sum::<f64>())
                .collect()
        })
        .collect()
}

fn rotate(x: &mut Mat, rot: usize, base: f64) {
    let half = rot / 2;
    for (pos, row) in x.iter_mut().enumerate() {
        for i in 0..half {
            let theta = pos as f64 * base.powf(-2.0 * i as f64 / rot as f64);
            let (a, b) = (row[i], row[i + half]);
            row[i] = a * theta.cos() - b * theta.sin();
            row[i + half] = a * theta.sin() + b * theta.cos();
        }
    }
}

pub fn forward(w: &ModelWeights<f64>, c: &ModelConfig, tokens: &[usize], ablate: Option<ComponentId>) -> DenseRun {
    let (seq, d, dh) = (tokens.len(), c.d_model, c.d_head);
    let mut contributions = Vec::new();

    let mut h = zeros(seq, d);
    if ablate != Some(ComponentId::Emb) {
        for (p, &t) in tokens.iter().enumerate() {
            for i in 0..d {
                h[p][i] = w.embed[[t, i]] + w.pos.as_ref().map_or(0.0, |pe| pe[[p, i]]);
            }
        }
    }
    contributions.push(h.clone());

    for (l, b) in w.layers.iter().enumerate() {
        let ln1w = b.ln1_w.to_vec();
        let ln1b = b.ln1_b.to_vec();
        let ln2w = b.ln2_w.to_vec();
        let ln2b = b.ln2_b.to_vec();
        let attn_in = match c.block_style {
            BlockStyle::PostlnSequential => h.clone(),
            _ => layer_norm(&h, &ln1w, &ln1b, c.ln_eps),
        };
        let mut attn = zeros(seq, d);
        for head in 0..c.n_heads {
            let mut q = project(&attn_in, dh, |i, j| b.w_q[[head, i, j]], |j| b.b_q[[head, j]]);
            let mut k = project(&attn_in, dh, |i, j| b.w_k[[head, i, j]], |j| b.b_k[[head, j]]);
            let v = project(&attn_in, dh, |i, j| b.w_v[[head, i, j]], |j| b.b_v[[head, j]]);
            if c.pos_style == PosStyle::Rotary {
                let rot = c.rotary_dim.unwrap_or(dh);
                rotate(&mut q, rot, c.rotary_base);
                rotate(&mut k, rot, c.rotary_base);
            }
            let mut z = zeros(seq, dh);
            for i in 0..seq {
                let scores: Vec<f64> = (0..=i)
                    .map(|j| (0..dh).map(|e| q[i][e] * k[j][e]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let total: f64 = ex.iter().sum();
                for (j, e) in ex.iter().enumerate() {
                    for f in 0..dh {
                        z[i][f] += e / total * v[j][f];
                    }
                }
            }
            let mut out = project(&z, d, |i, j| b.w_o[[head, i, j]], |_| 0.0);
            if ablate == Some(ComponentId::AttnHead { layer: l, head }) {
                out = zeros(seq, d);
            }
            attn = add(&attn, &out);
            contributions.push(out);
        }
        let attn = project(&attn, d, |i, j| if i == j { 1.0 } else { 0.0 }, |j| b.b_o[j]);

        let mlp = |x: &Mat| -> Mat {
            if ablate == Some(ComponentId::Mlp { layer: l }) {
                return zeros(seq, d);
            }
            let pre = project(x, c.d_mlp, |i, j| b.w_in[[i, j]], |j| b.b_in[j]);
            let act: Mat = pre.iter().map(|r| r.iter().map(|&v| gelu_tanh(v)).collect()).collect();
            project(&act, d, |i, j| b.w_out[[i, j]], |j| b.b_out[j])
        };
        match c.block_style {
            BlockStyle::PrelnSequential => {
                h = add(&h, &attn);
                let m = mlp(&layer_norm(&h, &ln2w, &ln2b, c.ln_eps));
                h = add(&h, &m);
                contributions.push(m);
            }
            BlockStyle::PostlnSequential => {
                let mid = layer_norm(&add(&h, &attn), &ln1w, &ln1b, c.ln_eps);
                let m = mlp(&mid);
                h = layer_norm(&add(&mid, &m), &ln2w, &ln2b, c.ln_eps);
                contributions.push(m);
            }
            BlockStyle::ParallelResidual => {
                let m = mlp(&layer_norm(&h, &ln2w, &ln2b, c.ln_eps));
                h = add(&add(&h, &attn), &m);
                contributions.push(m);
            }
        }
    }
    let hf = layer_norm(&h, &w.ln_f_w.to_vec(), &w.ln_f_b.to_vec(), c.ln_eps);
    let logits = project(&hf, c.vocab_size, |i, j| w.unembed[[i, j]], |_| 0.0);
    DenseRun { contributions, logits }
}

pub fn tiny_config(style: BlockStyle, pos: PosStyle) -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        n_heads: 1,
        d_model: 2,
        d_head: 2,
        d_mlp: 3,
        vocab_size: 3,
        n_ctx: 4,
        block_style: style,
        pos_style: pos,
        ln_eps: 1e-5,
        ..ModelConfig::desk_default()
    }
}

/// Hand-chosen weights for the 1-layer, 1-head, `d_model = 2` model. Values
/// are small distinct fractions so no two components coincide.
pub fn tiny_weights(config: &ModelConfig) -> ModelWeights<f64> {
    let mut w = ModelWeights::<f64>::zeros(config);
    let fill = |vals: &[f64], dst: &mut dyn Iterator<Item = &mut f64>| {
        for (slot, v) in dst.zip(vals.iter().cycle()) {
            *slot = *v;
        }
    };
    fill(&[0.9, -0.4, 0.3, 0.7, -0.8, 0.2], &mut w.embed.iter_mut());
    if let Some(p) = w.pos.as_mut() {
        fill(&[0.1, -0.2, 0.25, 0.05, -0.15, 0.3, 0.2, -0.1], &mut p.iter_mut());
    }
    let b = &mut w.layers[0];
    fill(&[1.1, 0.9], &mut b.ln1_w.iter_mut());
    fill(&[0.05, -0.02], &mut b.ln1_b.iter_mut());
    fill(&[0.6, -0.3, 0.4, 0.8], &mut b.w_q.iter_mut());
    fill(&[-0.5, 0.7, 0.2, 0.3], &mut b.w_k.iter_mut());
    fill(&[0.9, 0.1, -0.6, 0.4], &mut b.w_v.iter_mut());
    fill(&[0.01, -0.03], &mut b.b_q.iter_mut());
    fill(&[0.02, 0.04], &mut b.b_k.iter_mut());
    fill(&[-0.05, 0.06], &mut b.b_v.iter_mut());
    fill(&[0.7, -0.2, 0.3, 0.5], &mut b.w_o.iter_mut());
    fill(&[0.03, -0.01], &mut b.b_o.iter_mut());
    fill(&[0.95, 1.05], &mut b.ln2_w.iter_mut());
    fill(&[-0.04, 0.02], &mut b.ln2_b.iter_mut());
    fill(&[0.5, -0.7, 0.2, 0.9, 0.1, -0.4], &mut b.w_in.iter_mut());
    fill(&[0.1, 0.0, -0.1], &mut b.b_in.iter_mut());
    fill(&[0.3, -0.6, 0.8, 0.2, -0.5, 0.4], &mut b.w_out.iter_mut());
    fill(&[0.02, -0.03], &mut b.b_out.iter_mut());
    fill(&[1.0, 0.8], &mut w.ln_f_w.iter_mut());
    fill(&[0.01, -0.01], &mut w.ln_f_b.iter_mut());
    fill(&[0.4, -0.9, 0.6, 0.7, 0.2, -0.3], &mut w.unembed.iter_mut());
    w
}

pub fn cosine(a: &Mat, b: &Mat) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (r, s) in a.iter().zip(b) {
        for (x, y) in r.iter().zip(s) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

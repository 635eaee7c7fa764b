// SPDX-License-Identifier: Apache-2.0

use ndarray::{Array1, Array2, Array3, ArrayViewD, ArrayViewMutD};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, PosStyle, Scalar};

/// Parameters of one transformer block. Attention projections are stored
/// per head.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ln1_w: Array1<T>,
    pub ln1_b: Array1<T>,
    /// `[n_heads, d_model, d_head]`
    pub w_q: Array3<T>,
    pub w_k: Array3<T>,
    pub w_v: Array3<T>,
    /// `[n_heads, d_head]`
    pub b_q: Array2<T>,
    pub b_k: Array2<T>,
    pub b_v: Array2<T>,
    /// `[n_heads, d_head, d_model]`
    pub w_o: Array3<T>,
    pub b_o: Array1<T>,
    pub ln2_w: Array1<T>,
    pub ln2_b: Array1<T>,
    /// `[d_model, d_mlp]`
    pub w_in: Array2<T>,
    pub b_in: Array1<T>,
    /// `[d_mlp, d_model]`
    pub w_out: Array2<T>,
    pub b_out: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    /// `[vocab_size, d_model]`
    pub embed: Array2<T>,
    /// `[n_ctx, d_model]`, learned absolute positions only.
    pub pos: Option<Array2<T>>,
    pub layers: Vec<LayerWeights<T>>,
    pub ln_f_w: Array1<T>,
    pub ln_f_b: Array1<T>,
    /// `[d_model, vocab_size]`
    pub unembed: Array2<T>,
}

/// Canonical tensor names with their shapes, in storage order.
pub(crate) fn expected_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, h, dh, m) = (config.d_model, config.n_heads, config.d_head, config.d_mlp);
    let mut out = vec![("embed.W_E".to_string(), vec![config.vocab_size, d])];
    if config.pos_style == PosStyle::LearnedAbsolute {
        out.push(("pos.W_P".to_string(), vec![config.n_ctx, d]));
    }
    for l in 0..config.n_layers {
        let p = |s: &str| format!("blocks.{l}.{s}");
        out.extend([
            (p("ln1.w"), vec![d]),
            (p("ln1.b"), vec![d]),
            (p("attn.W_Q"), vec![h, d, dh]),
            (p("attn.W_K"), vec![h, d, dh]),
            (p("attn.W_V"), vec![h, d, dh]),
            (p("attn.b_Q"), vec![h, dh]),
            (p("attn.b_K"), vec![h, dh]),
            (p("attn.b_V"), vec![h, dh]),
            (p("attn.W_O"), vec![h, dh, d]),
            (p("attn.b_O"), vec![d]),
            (p("ln2.w"), vec![d]),
            (p("ln2.b"), vec![d]),
            (p("mlp.W_in"), vec![d, m]),
            (p("mlp.b_in"), vec![m]),
            (p("mlp.W_out"), vec![m, d]),
            (p("mlp.b_out"), vec![d]),
        ]);
    }
    out.extend([
        ("ln_f.w".to_string(), vec![d]),
        ("ln_f.b".to_string(), vec![d]),
        ("unembed.W_U".to_string(), vec![d, config.vocab_size]),
    ]);
    out
}

impl<T: Scalar> LayerWeights<T> {
    fn zeros(config: &ModelConfig) -> Self {
        let (d, h, dh, m) = (config.d_model, config.n_heads, config.d_head, config.d_mlp);
        LayerWeights {
            ln1_w: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w_q: Array3::zeros((h, d, dh)),
            w_k: Array3::zeros((h, d, dh)),
            w_v: Array3::zeros((h, d, dh)),
            b_q: Array2::zeros((h, dh)),
            b_k: Array2::zeros((h, dh)),
            b_v: Array2::zeros((h, dh)),
            w_o: Array3::zeros((h, dh, d)),
            b_o: Array1::zeros(d),
            ln2_w: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w_in: Array2::zeros((d, m)),
            b_in: Array1::zeros(m),
            w_out: Array2::zeros((m, d)),
            b_out: Array1::zeros(d),
        }
    }
}

impl<T: Scalar> ModelWeights<T> {
    /// All-zero weights, including layer-norm scales.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        ModelWeights {
            embed: Array2::zeros((config.vocab_size, d)),
            pos: (config.pos_style == PosStyle::LearnedAbsolute).then(|| Array2::zeros((config.n_ctx, d))),
            layers: (0..config.n_layers).map(|_| LayerWeights::zeros(config)).collect(),
            ln_f_w: Array1::zeros(d),
            ln_f_b: Array1::zeros(d),
            unembed: Array2::zeros((d, config.vocab_size)),
        }
    }

    /// Every tensor under its canonical name, in storage order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = vec![("embed.W_E".to_string(), self.embed.view().into_dyn())];
        if let Some(pos) = &self.pos {
            out.push(("pos.W_P".to_string(), pos.view().into_dyn()));
        }
        for (l, b) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            out.extend([
                (p("ln1.w"), b.ln1_w.view().into_dyn()),
                (p("ln1.b"), b.ln1_b.view().into_dyn()),
                (p("attn.W_Q"), b.w_q.view().into_dyn()),
                (p("attn.W_K"), b.w_k.view().into_dyn()),
                (p("attn.W_V"), b.w_v.view().into_dyn()),
                (p("attn.b_Q"), b.b_q.view().into_dyn()),
                (p("attn.b_K"), b.b_k.view().into_dyn()),
                (p("attn.b_V"), b.b_v.view().into_dyn()),
                (p("attn.W_O"), b.w_o.view().into_dyn()),
                (p("attn.b_O"), b.b_o.view().into_dyn()),
                (p("ln2.w"), b.ln2_w.view().into_dyn()),
                (p("ln2.b"), b.ln2_b.view().into_dyn()),
                (p("mlp.W_in"), b.w_in.view().into_dyn()),
                (p("mlp.b_in"), b.b_in.view().into_dyn()),
                (p("mlp.W_out"), b.w_out.view().into_dyn()),
                (p("mlp.b_out"), b.b_out.view().into_dyn()),
            ]);
        }
        out.extend([
            ("ln_f.w".to_string(), self.ln_f_w.view().into_dyn()),
            ("ln_f.b".to_string(), self.ln_f_b.view().into_dyn()),
            ("unembed.W_U".to_string(), self.unembed.view().into_dyn()),
        ]);
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        let mut out = vec![("embed.W_E".to_string(), self.embed.view_mut().into_dyn())];
        if let Some(pos) = &mut self.pos {
            out.push(("pos.W_P".to_string(), pos.view_mut().into_dyn()));
        }
        for (l, b) in self.layers.iter_mut().enumerate() {
            let p = |s: &str| format!("blocks.{l}.{s}");
            out.extend([
                (p("ln1.w"), b.ln1_w.view_mut().into_dyn()),
                (p("ln1.b"), b.ln1_b.view_mut().into_dyn()),
                (p("attn.W_Q"), b.w_q.view_mut().into_dyn()),
                (p("attn.W_K"), b.w_k.view_mut().into_dyn()),
                (p("attn.W_V"), b.w_v.view_mut().into_dyn()),
                (p("attn.b_Q"), b.b_q.view_mut().into_dyn()),
                (p("attn.b_K"), b.b_k.view_mut().into_dyn()),
                (p("attn.b_V"), b.b_v.view_mut().into_dyn()),
                (p("attn.W_O"), b.w_o.view_mut().into_dyn()),
                (p("attn.b_O"), b.b_o.view_mut().into_dyn()),
                (p("ln2.w"), b.ln2_w.view_mut().into_dyn()),
                (p("ln2.b"), b.ln2_b.view_mut().into_dyn()),
                (p("mlp.W_in"), b.w_in.view_mut().into_dyn()),
                (p("mlp.b_in"), b.b_in.view_mut().into_dyn()),
                (p("mlp.W_out"), b.w_out.view_mut().into_dyn()),
                (p("mlp.b_out"), b.b_out.view_mut().into_dyn()),
            ]);
        }
        out.extend([
            ("ln_f.w".to_string(), self.ln_f_w.view_mut().into_dyn()),
            ("ln_f.b".to_string(), self.ln_f_b.view_mut().into_dyn()),
            ("unembed.W_U".to_string(), self.unembed.view_mut().into_dyn()),
        ]);
        out
    }

    /// Checks tensor shapes against `config`.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        if self.layers.len() != config.n_layers {
            return Err(Error::Shape {
                name: "blocks".to_string(),
                expected: vec![config.n_layers],
                found: vec![self.layers.len()],
            });
        }
        if self.pos.is_some() != (config.pos_style == PosStyle::LearnedAbsolute) {
            return Err(Error::Shape {
                name: "pos.W_P".to_string(),
                expected: if config.pos_style == PosStyle::LearnedAbsolute {
                    vec![config.n_ctx, config.d_model]
                } else {
                    vec![]
                },
                found: self.pos.as_ref().map(|p| p.shape().to_vec()).unwrap_or_default(),
            });
        }
        for ((name, view), (_, shape)) in self.tensors().iter().zip(expected_shapes(config)) {
            if view.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    name: name.clone(),
                    expected: shape,
                    found: view.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Elementwise conversion to another precision.
    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        let c = |v: &T| U::from_f64_lossy(v.to_f64().unwrap());
        ModelWeights {
            embed: self.embed.map(c),
            pos: self.pos.as_ref().map(|p| p.map(c)),
            layers: self
                .layers
                .iter()
                .map(|b| LayerWeights {
                    ln1_w: b.ln1_w.map(c),
                    ln1_b: b.ln1_b.map(c),
                    w_q: b.w_q.map(c),
                    w_k: b.w_k.map(c),
                    w_v: b.w_v.map(c),
                    b_q: b.b_q.map(c),
                    b_k: b.b_k.map(c),
                    b_v: b.b_v.map(c),
                    w_o: b.w_o.map(c),
                    b_o: b.b_o.map(c),
                    ln2_w: b.ln2_w.map(c),
                    ln2_b: b.ln2_b.map(c),
                    w_in: b.w_in.map(c),
                    b_in: b.b_in.map(c),
                    w_out: b.w_out.map(c),
                    b_out: b.b_out.map(c),
                })
                .collect(),
            ln_f_w: self.ln_f_w.map(c),
            ln_f_b: self.ln_f_b.map(c),
            unembed: self.unembed.map(c),
        }
    }
}

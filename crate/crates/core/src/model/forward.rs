// SPDX-License-Identifier: Apache-2.0

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::ops::{causal_softmax_inplace, gelu, layer_norm};
use crate::model::rotary::apply_rotary_partial;
use crate::model::{BlockStyle, ComponentId, LayerWeights, ModelConfig, ModelWeights, PosStyle, Scalar};

/// Everything captured by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord<T> {
    /// Residual-stream contribution of each component, `[seq_len × d_model]`,
    /// indexed like [`enumerate_components`](crate::model::enumerate_components).
    pub contributions: Vec<Array2<T>>,
    /// `[seq_len × vocab_size]`
    pub logits: Array2<T>,
    /// Residual stream right before the final layer norm.
    pub final_residual: Array2<T>,
    pub ablated: Option<ComponentId>,
}

impl<T> ForwardRecord<T> {
    pub fn seq_len(&self) -> usize {
        self.logits.nrows()
    }

    pub fn contribution(&self, component: ComponentId, config: &ModelConfig) -> &Array2<T> {
        &self.contributions[component.index(config)]
    }
}

/// Run the model on `tokens`, optionally zero-ablating one component before
/// its output reaches the residual stream.
///
/// A head's contribution is its slice of the output projection (`z_h W_O[h]`);
/// the shared output bias `b_O` is added once per layer and belongs to no
/// head. An MLP's contribution includes its output bias.
pub fn forward<T: Scalar>(
    weights: &ModelWeights<T>,
    config: &ModelConfig,
    tokens: &[usize],
    ablate: Option<ComponentId>,
) -> Result<ForwardRecord<T>> {
    weights.validate(config)?;
    if tokens.is_empty() {
        return Err(Error::Input("empty token sequence".into()));
    }
    if tokens.len() > config.n_ctx {
        return Err(Error::SequenceTooLong {
            len: tokens.len(),
            n_ctx: config.n_ctx,
        });
    }
    if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= config.vocab_size) {
        return Err(Error::TokenOutOfRange {
            token,
            position,
            vocab_size: config.vocab_size,
        });
    }
    if let Some(c) = ablate {
        c.check(config)?;
    }

    let seq = tokens.len();
    let d = config.d_model;
    let positions: Vec<usize> = (0..seq).collect();
    let mut contributions = Vec::with_capacity(config.num_components());

    let mut resid = Array2::<T>::zeros((seq, d));
    if ablate != Some(ComponentId::Emb) {
        for (r, &t) in tokens.iter().enumerate() {
            let mut row = resid.row_mut(r);
            row.assign(&weights.embed.row(t));
            if let Some(pos) = &weights.pos {
                row += &pos.row(r);
            }
        }
    }
    contributions.push(resid.clone());

    for (layer, block) in weights.layers.iter().enumerate() {
        let eps = config.ln_eps;
        let attn_in = match config.block_style {
            BlockStyle::PostlnSequential => resid.clone(),
            _ => layer_norm(resid.view(), block.ln1_w.view(), block.ln1_b.view(), eps),
        };
        let mut attn_sum = Array2::<T>::zeros((seq, d));
        for head in 0..config.n_heads {
            let id = ComponentId::AttnHead { layer, head };
            let contrib = if ablate == Some(id) {
                Array2::zeros((seq, d))
            } else {
                head_contribution(block, config, head, attn_in.view(), &positions)?
            };
            attn_sum += &contrib;
            contributions.push(contrib);
        }
        attn_sum += &block.b_o;

        let mlp_id = ComponentId::Mlp { layer };
        match config.block_style {
            BlockStyle::PrelnSequential => {
                resid += &attn_sum;
                let mlp_in = layer_norm(resid.view(), block.ln2_w.view(), block.ln2_b.view(), eps);
                let mlp = mlp_output(block, config, mlp_in.view(), ablate == Some(mlp_id));
                resid += &mlp;
                contributions.push(mlp);
            }
            BlockStyle::PostlnSequential => {
                resid += &attn_sum;
                let mid = layer_norm(resid.view(), block.ln1_w.view(), block.ln1_b.view(), eps);
                let mlp = mlp_output(block, config, mid.view(), ablate == Some(mlp_id));
                let sum = &mid + &mlp;
                resid = layer_norm(sum.view(), block.ln2_w.view(), block.ln2_b.view(), eps);
                contributions.push(mlp);
            }
            BlockStyle::ParallelResidual => {
                let mlp_in = layer_norm(resid.view(), block.ln2_w.view(), block.ln2_b.view(), eps);
                let mlp = mlp_output(block, config, mlp_in.view(), ablate == Some(mlp_id));
                resid += &attn_sum;
                resid += &mlp;
                contributions.push(mlp);
            }
        }
    }

    let normed = layer_norm(resid.view(), weights.ln_f_w.view(), weights.ln_f_b.view(), config.ln_eps);
    let logits = normed.dot(&weights.unembed);

    Ok(ForwardRecord {
        contributions,
        logits,
        final_residual: resid,
        ablated: ablate,
    })
}

fn head_contribution<T: Scalar>(
    block: &LayerWeights<T>,
    config: &ModelConfig,
    head: usize,
    x: ArrayView2<T>,
    positions: &[usize],
) -> Result<Array2<T>> {
    let mut q = x.dot(&block.w_q.index_axis(Axis(0), head)) + block.b_q.row(head);
    let mut k = x.dot(&block.w_k.index_axis(Axis(0), head)) + block.b_k.row(head);
    let v = x.dot(&block.w_v.index_axis(Axis(0), head)) + block.b_v.row(head);
    if config.pos_style == PosStyle::Rotary {
        let rot = config.rotary_dim();
        q = apply_rotary_partial(q.view(), positions, config.rotary_base, rot)?;
        k = apply_rotary_partial(k.view(), positions, config.rotary_base, rot)?;
    }
    let scale = T::from_f64_lossy(1.0 / (config.d_head as f64).sqrt());
    let mut scores = q.dot(&k.t()) * scale;
    causal_softmax_inplace(scores.view_mut());
    let z = scores.dot(&v);
    Ok(z.dot(&block.w_o.index_axis(Axis(0), head)))
}

fn mlp_output<T: Scalar>(block: &LayerWeights<T>, config: &ModelConfig, x: ArrayView2<T>, ablated: bool) -> Array2<T> {
    if ablated {
        return Array2::zeros((x.nrows(), config.d_model));
    }
    let mut pre = x.dot(&block.w_in) + &block.b_in;
    pre.mapv_inplace(|v| gelu(v, config.activation));
    pre.dot(&block.w_out) + &block.b_out
}

/// Logit of `target` at `position` (the last position when `None`).
pub fn correct_token_logit<T: Scalar>(record: &ForwardRecord<T>, target: usize, position: Option<usize>) -> Result<f64> {
    let (seq, vocab) = record.logits.dim();
    let position = position.unwrap_or(seq.saturating_sub(1));
    if position >= seq {
        return Err(Error::Index(format!("position {position} >= seq_len {seq}")));
    }
    if target >= vocab {
        return Err(Error::Index(format!("target {target} >= vocab_size {vocab}")));
    }
    Ok(record.logits[[position, target]].to_f64().unwrap())
}

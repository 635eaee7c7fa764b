// SPDX-License-Identifier: Apache-2.0

//! Hand-derived reverse-mode gradients for the pre-LN sequential block with
//! learned absolute positions and tanh-GELU, the architecture the trainer
//! uses. Rows of all `[N × ·]` matrices are `(batch, position)` flattened.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::ops::{causal_softmax_inplace, gelu, gelu_tanh_grad, layer_norm_backward, layer_norm_cached};
use crate::model::{Activation, BlockStyle, ModelConfig, ModelWeights, PosStyle, Scalar};
use crate::train::Batch;

/// Loss and accuracy of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Mean masked cross-entropy.
    pub loss: f64,
    /// Argmax accuracy over predictions whose target is in the repeated half.
    pub repeat_accuracy: f64,
    /// Argmax accuracy over predictions whose target is in the first half
    /// (excluding the first token, which has no predictor).
    pub first_half_accuracy: f64,
}

struct LayerCache<T> {
    x1: Array2<T>,
    xhat1: Array2<T>,
    rstd1: Array1<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    /// One `[S × S]` probability matrix per `(batch row, head)`.
    probs: Vec<Array2<T>>,
    z: Array2<T>,
    x2: Array2<T>,
    xhat2: Array2<T>,
    rstd2: Array1<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

struct Cache<T> {
    layers: Vec<LayerCache<T>>,
    xf: Array2<T>,
    xhatf: Array2<T>,
    rstdf: Array1<T>,
    logits: Array2<T>,
}

/// `[H, D, dh] -> [D, H*dh]`
fn heads_to_cols<T: Scalar>(w: &Array3<T>) -> Array2<T> {
    let (h, d, dh) = w.dim();
    let mut out = Array2::zeros((d, h * dh));
    for i in 0..h {
        out.slice_mut(s![.., i * dh..(i + 1) * dh]).assign(&w.index_axis(Axis(0), i));
    }
    out
}

/// `[D, H*dh] -> [H, D, dh]`
fn cols_to_heads<T: Scalar>(w: &Array2<T>, h: usize) -> Array3<T> {
    let (d, hd) = w.dim();
    let dh = hd / h;
    let mut out = Array3::zeros((h, d, dh));
    for i in 0..h {
        out.index_axis_mut(Axis(0), i).assign(&w.slice(s![.., i * dh..(i + 1) * dh]));
    }
    out
}

fn flat<T: Scalar>(a: &Array2<T>) -> Array1<T> {
    a.iter().copied().collect()
}

fn check_supported(config: &ModelConfig) -> Result<()> {
    if config.block_style != BlockStyle::PrelnSequential
        || config.pos_style != PosStyle::LearnedAbsolute
        || config.activation != Activation::GeluTanh
    {
        return Err(Error::Unsupported(
            "gradients are implemented for preln_sequential + learned_absolute + gelu_tanh".into(),
        ));
    }
    Ok(())
}

fn check_batch(config: &ModelConfig, batch: &Batch) -> Result<()> {
    if batch.tokens.dim() != batch.loss_mask.dim() {
        return Err(Error::Input("tokens and loss_mask shapes differ".into()));
    }
    if batch.seq_len() > config.n_ctx {
        return Err(Error::SequenceTooLong {
            len: batch.seq_len(),
            n_ctx: config.n_ctx,
        });
    }
    if let Some(&t) = batch.tokens.iter().find(|&&t| t >= config.vocab_size) {
        return Err(Error::TokenOutOfRange {
            token: t,
            position: 0,
            vocab_size: config.vocab_size,
        });
    }
    if batch.loss_mask.column(batch.seq_len() - 1).iter().any(|&m| m) {
        return Err(Error::Input("the last position has no target and cannot be masked in".into()));
    }
    Ok(())
}

fn forward_cached<T: Scalar>(w: &ModelWeights<T>, config: &ModelConfig, batch: &Batch) -> Cache<T> {
    let (bsz, seq) = batch.tokens.dim();
    let (d, h, dh) = (config.d_model, config.n_heads, config.d_head);
    let n = bsz * seq;
    let eps = config.ln_eps;
    let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
    let pos = w.pos.as_ref().expect("learned positions");

    let mut resid = Array2::<T>::zeros((n, d));
    for ((b, p), &t) in batch.tokens.indexed_iter() {
        let mut row = resid.row_mut(b * seq + p);
        row.assign(&w.embed.row(t));
        row += &pos.row(p);
    }

    let mut layers = Vec::with_capacity(config.n_layers);
    for block in &w.layers {
        let (x1, xhat1, rstd1) = layer_norm_cached(resid.view(), block.ln1_w.view(), block.ln1_b.view(), eps);
        let q = x1.dot(&heads_to_cols(&block.w_q)) + &flat(&block.b_q);
        let k = x1.dot(&heads_to_cols(&block.w_k)) + &flat(&block.b_k);
        let v = x1.dot(&heads_to_cols(&block.w_v)) + &flat(&block.b_v);
        let mut z = Array2::<T>::zeros((n, h * dh));
        let mut probs = Vec::with_capacity(bsz * h);
        for b in 0..bsz {
            let rows = b * seq..(b + 1) * seq;
            for head in 0..h {
                let cols = head * dh..(head + 1) * dh;
                let qb = q.slice(s![rows.clone(), cols.clone()]);
                let kb = k.slice(s![rows.clone(), cols.clone()]);
                let vb = v.slice(s![rows.clone(), cols.clone()]);
                let mut scores = qb.dot(&kb.t()) * scale;
                causal_softmax_inplace(scores.view_mut());
                z.slice_mut(s![rows.clone(), cols]).assign(&scores.dot(&vb));
                probs.push(scores);
            }
        }
        let wo = block.w_o.view().into_shape_with_order((h * dh, d)).expect("contiguous W_O");
        resid += &(z.dot(&wo) + &block.b_o);

        let (x2, xhat2, rstd2) = layer_norm_cached(resid.view(), block.ln2_w.view(), block.ln2_b.view(), eps);
        let pre = x2.dot(&block.w_in) + &block.b_in;
        let act = pre.mapv(|x| gelu(x, Activation::GeluTanh));
        resid += &(act.dot(&block.w_out) + &block.b_out);

        layers.push(LayerCache {
            x1,
            xhat1,
            rstd1,
            q,
            k,
            v,
            probs,
            z,
            x2,
            xhat2,
            rstd2,
            pre,
            act,
        });
    }

    let (xf, xhatf, rstdf) = layer_norm_cached(resid.view(), w.ln_f_w.view(), w.ln_f_b.view(), eps);
    let logits = xf.dot(&w.unembed);
    Cache {
        layers,
        xf,
        xhatf,
        rstdf,
        logits,
    }
}

/// Masked cross-entropy, its gradient w.r.t. the logits, and accuracies.
fn loss_head<T: Scalar>(logits: ArrayView2<T>, batch: &Batch) -> (BatchStats, Array2<T>) {
    let (bsz, seq) = batch.tokens.dim();
    let half = seq / 2;
    let count = batch.loss_mask.iter().filter(|&&m| m).count();
    let mut dlogits = Array2::<T>::zeros(logits.dim());
    let mut loss = 0.0f64;
    let mut seen = 0usize;
    let (mut rep_hit, mut rep_tot, mut first_hit, mut first_tot) = (0usize, 0usize, 0usize, 0usize);
    for b in 0..bsz {
        for p in 0..seq - 1 {
            let r = b * seq + p;
            let row = logits.row(r);
            let target = batch.tokens[[b, p + 1]];
            let argmax = row
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            if p + 1 >= half {
                rep_tot += 1;
                rep_hit += usize::from(argmax == target);
            } else {
                first_tot += 1;
                first_hit += usize::from(argmax == target);
            }
            if !batch.loss_mask[[b, p]] {
                continue;
            }
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64().unwrap()));
            let sum: f64 = row.iter().map(|v| (v.to_f64().unwrap() - max).exp()).sum();
            let lse = max + sum.ln();
            // running mean keeps equal per-position losses exact
            seen += 1;
            loss += (lse - row[target].to_f64().unwrap() - loss) / seen as f64;
            let inv = 1.0 / count as f64;
            for (j, g) in dlogits.row_mut(r).iter_mut().enumerate() {
                let p_j = (row[j].to_f64().unwrap() - lse).exp();
                let onehot = if j == target { 1.0 } else { 0.0 };
                *g = T::from_f64_lossy((p_j - onehot) * inv);
            }
        }
    }
    let ratio = |hit: usize, tot: usize| if tot == 0 { 0.0 } else { hit as f64 / tot as f64 };
    let stats = BatchStats {
        loss,
        repeat_accuracy: ratio(rep_hit, rep_tot),
        first_half_accuracy: ratio(first_hit, first_tot),
    };
    (stats, dlogits)
}

/// Loss and accuracies without gradients.
pub fn evaluate<T: Scalar>(weights: &ModelWeights<T>, config: &ModelConfig, batch: &Batch) -> Result<BatchStats> {
    check_supported(config)?;
    weights.validate(config)?;
    check_batch(config, batch)?;
    let cache = forward_cached(weights, config, batch);
    Ok(loss_head(cache.logits.view(), batch).0)
}

/// Mean masked next-token cross-entropy and its gradient for every tensor.
pub fn loss_and_grads<T: Scalar>(
    weights: &ModelWeights<T>,
    config: &ModelConfig,
    batch: &Batch,
) -> Result<(BatchStats, ModelWeights<T>)> {
    check_supported(config)?;
    weights.validate(config)?;
    check_batch(config, batch)?;
    let cache = forward_cached(weights, config, batch);
    let (stats, dlogits) = loss_head(cache.logits.view(), batch);
    if !stats.loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }

    let (bsz, seq) = batch.tokens.dim();
    let (d, h, dh) = (config.d_model, config.n_heads, config.d_head);
    let scale = T::from_f64_lossy(1.0 / (dh as f64).sqrt());
    let mut g = ModelWeights::<T>::zeros(config);

    g.unembed = cache.xf.t().dot(&dlogits);
    let dxf = dlogits.dot(&weights.unembed.t());
    let mut dresid = layer_norm_backward(
        dxf.view(),
        cache.xhatf.view(),
        cache.rstdf.view(),
        weights.ln_f_w.view(),
        &mut g.ln_f_w,
        &mut g.ln_f_b,
    );

    for (l, (block, c)) in weights.layers.iter().zip(&cache.layers).enumerate().rev() {
        let gb = &mut g.layers[l];

        // MLP
        gb.w_out = c.act.t().dot(&dresid);
        gb.b_out = dresid.sum_axis(Axis(0));
        let mut dpre = dresid.dot(&block.w_out.t());
        ndarray::Zip::from(&mut dpre).and(&c.pre).for_each(|g, &x| *g *= gelu_tanh_grad(x));
        gb.w_in = c.x2.t().dot(&dpre);
        gb.b_in = dpre.sum_axis(Axis(0));
        let dx2 = dpre.dot(&block.w_in.t());
        dresid += &layer_norm_backward(
            dx2.view(),
            c.xhat2.view(),
            c.rstd2.view(),
            block.ln2_w.view(),
            &mut gb.ln2_w,
            &mut gb.ln2_b,
        );

        // attention
        gb.b_o = dresid.sum_axis(Axis(0));
        let wo = block.w_o.view().into_shape_with_order((h * dh, d)).expect("contiguous W_O");
        gb.w_o = c
            .z
            .t()
            .dot(&dresid)
            .into_shape_with_order((h, dh, d))
            .expect("contiguous grad W_O");
        let dz = dresid.dot(&wo.t());
        let n = bsz * seq;
        let mut dq = Array2::<T>::zeros((n, h * dh));
        let mut dk = Array2::<T>::zeros((n, h * dh));
        let mut dv = Array2::<T>::zeros((n, h * dh));
        for b in 0..bsz {
            let rows = b * seq..(b + 1) * seq;
            for head in 0..h {
                let cols = head * dh..(head + 1) * dh;
                let probs = &c.probs[b * h + head];
                let dzb = dz.slice(s![rows.clone(), cols.clone()]);
                let qb = c.q.slice(s![rows.clone(), cols.clone()]);
                let kb = c.k.slice(s![rows.clone(), cols.clone()]);
                let vb = c.v.slice(s![rows.clone(), cols.clone()]);
                dv.slice_mut(s![rows.clone(), cols.clone()]).assign(&probs.t().dot(&dzb));
                let mut dscores = dzb.dot(&vb.t());
                for (mut ds_row, p_row) in dscores.rows_mut().into_iter().zip(probs.rows()) {
                    let dot = ds_row.iter().zip(p_row.iter()).map(|(&a, &p)| a * p).sum::<T>();
                    ndarray::Zip::from(&mut ds_row).and(&p_row).for_each(|ds, &p| *ds = p * (*ds - dot) * scale);
                }
                dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&dscores.dot(&kb));
                dk.slice_mut(s![rows.clone(), cols]).assign(&dscores.t().dot(&qb));
            }
        }
        gb.w_q = cols_to_heads(&c.x1.t().dot(&dq), h);
        gb.w_k = cols_to_heads(&c.x1.t().dot(&dk), h);
        gb.w_v = cols_to_heads(&c.x1.t().dot(&dv), h);
        let bias = |m: &Array2<T>| m.sum_axis(Axis(0)).into_shape_with_order((h, dh)).expect("bias shape");
        gb.b_q = bias(&dq);
        gb.b_k = bias(&dk);
        gb.b_v = bias(&dv);
        let dx1 = dq.dot(&heads_to_cols(&block.w_q).t())
            + dk.dot(&heads_to_cols(&block.w_k).t())
            + dv.dot(&heads_to_cols(&block.w_v).t());
        dresid += &layer_norm_backward(
            dx1.view(),
            c.xhat1.view(),
            c.rstd1.view(),
            block.ln1_w.view(),
            &mut gb.ln1_w,
            &mut gb.ln1_b,
        );
    }

    let gpos = g.pos.as_mut().expect("learned positions");
    for ((b, p), &t) in batch.tokens.indexed_iter() {
        let row = dresid.row(b * seq + p);
        let mut e = g.embed.row_mut(t);
        e += &row;
        let mut pp = gpos.row_mut(p);
        pp += &row;
    }
    Ok((stats, g))
}

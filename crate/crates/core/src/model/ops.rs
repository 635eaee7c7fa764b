// SPDX-License-Identifier: Apache-2.0

//! Row-wise kernels shared by the analysis forward and the trainer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};

use crate::model::{Activation, Scalar};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// Row-wise layer norm. Also returns the normalized rows and the reciprocal
/// standard deviations, which the trainer's backward pass needs.
pub(crate) fn layer_norm_cached<T: Scalar>(
    x: ArrayView2<T>,
    w: ArrayView1<T>,
    b: ArrayView1<T>,
    eps: f64,
) -> (Array2<T>, Array2<T>, Array1<T>) {
    let (rows, cols) = x.dim();
    let n = T::from_usize(cols).unwrap();
    let eps = T::from_f64_lossy(eps);
    let mut xhat = Array2::<T>::zeros((rows, cols));
    let mut rstd = Array1::<T>::zeros(rows);
    for (r, row) in x.outer_iter().enumerate() {
        let mean = row.sum() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = (var + eps).sqrt().recip();
        rstd[r] = inv;
        Zip::from(xhat.row_mut(r)).and(&row).for_each(|o, &v| *o = (v - mean) * inv);
    }
    let mut y = xhat.clone();
    Zip::from(y.rows_mut()).for_each(|mut row| {
        Zip::from(&mut row).and(&w).and(&b).for_each(|o, &wi, &bi| *o = *o * wi + bi);
    });
    (y, xhat, rstd)
}

pub(crate) fn layer_norm<T: Scalar>(x: ArrayView2<T>, w: ArrayView1<T>, b: ArrayView1<T>, eps: f64) -> Array2<T> {
    layer_norm_cached(x, w, b, eps).0
}

/// Backward of `y = xhat * w + b` with `xhat = (x - mean) * rstd`.
/// Accumulates into `dw`, `db` and returns `dx`.
pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: ArrayView2<T>,
    xhat: ArrayView2<T>,
    rstd: ArrayView1<T>,
    w: ArrayView1<T>,
    dw: &mut Array1<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    let (rows, cols) = dy.dim();
    let n = T::from_usize(cols).unwrap();
    let mut dx = Array2::<T>::zeros((rows, cols));
    for r in 0..rows {
        let dyr = dy.row(r);
        let xr = xhat.row(r);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for c in 0..cols {
            dw[c] += dyr[c] * xr[c];
            db[c] += dyr[c];
            let g = dyr[c] * w[c];
            sum_g += g;
            sum_gx += g * xr[c];
        }
        let mean_g = sum_g / n;
        let mean_gx = sum_gx / n;
        let inv = rstd[r];
        for c in 0..cols {
            let g = dyr[c] * w[c];
            dx[[r, c]] = inv * (g - mean_g - xr[c] * mean_gx);
        }
    }
    dx
}

/// `tanh` via one `exp`; several times faster than the libm call and
/// saturates cleanly to +-1.
fn tanh<T: Scalar>(y: T) -> T {
    let two = T::from_f64_lossy(2.0);
    T::one() - two / ((two * y).exp() + T::one())
}

pub(crate) fn gelu<T: Scalar>(x: T, act: Activation) -> T {
    let half = T::from_f64_lossy(0.5);
    match act {
        Activation::GeluTanh => {
            let c = T::from_f64_lossy(SQRT_2_OVER_PI);
            let k = T::from_f64_lossy(GELU_CUBIC);
            half * x * (T::one() + tanh(c * (x + k * x * x * x)))
        }
        Activation::GeluErf => {
            let xf = x.to_f64().unwrap();
            T::from_f64_lossy(0.5 * xf * (1.0 + libm::erf(xf / std::f64::consts::SQRT_2)))
        }
    }
}

/// Derivative of the tanh-approximated GELU.
pub(crate) fn gelu_tanh_grad<T: Scalar>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let c = T::from_f64_lossy(SQRT_2_OVER_PI);
    let k = T::from_f64_lossy(GELU_CUBIC);
    let three = T::from_f64_lossy(3.0);
    let t = tanh(c * (x + k * x * x * x));
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x)
}

/// Causal softmax over each row of `scores` in place: entries with column >
/// row are masked to -inf before the max-subtracted softmax.
pub(crate) fn causal_softmax_inplace<T: Scalar>(mut scores: ArrayViewMut2<T>) {
    for (i, mut row) in scores.axis_iter_mut(Axis(0)).enumerate() {
        let mut max = T::neg_infinity();
        for (j, v) in row.iter_mut().enumerate() {
            if j > i {
                *v = T::neg_infinity();
            } else if *v > max {
                max = *v;
            }
        }
        let mut sum = T::zero();
        for v in row.iter_mut() {
            // exp(-inf) == 0 handles the masked tail
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

// SPDX-License-Identifier: Apache-2.0

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::Scalar;

/// Rotary position embedding over all columns of `x` (`[seq_len × d_head]`).
pub fn apply_rotary<T: Scalar>(x: ArrayView2<T>, positions: &[usize], base: f64) -> Result<Array2<T>> {
    let dim = x.ncols();
    apply_rotary_partial(x, positions, base, dim)
}

/// Rotates the first `rot_dim` columns and passes the rest through.
///
/// Pairs are split-half (column `i` with column `i + rot_dim/2`), rotated by
/// `pos * base^(-2i/rot_dim)`, the GPT-NeoX layout.
pub fn apply_rotary_partial<T: Scalar>(
    x: ArrayView2<T>,
    positions: &[usize],
    base: f64,
    rot_dim: usize,
) -> Result<Array2<T>> {
    if !rot_dim.is_multiple_of(2) {
        return Err(Error::OddRotaryDim(rot_dim));
    }
    if rot_dim > x.ncols() {
        return Err(Error::Index(format!("rotary dim {rot_dim} > head dim {}", x.ncols())));
    }
    if positions.len() != x.nrows() {
        return Err(Error::LengthMismatch(positions.len(), x.nrows()));
    }
    let half = rot_dim / 2;
    let mut out = x.to_owned();
    for (r, &pos) in positions.iter().enumerate() {
        for i in 0..half {
            let inv_freq = base.powf(-2.0 * i as f64 / rot_dim as f64);
            let angle = pos as f64 * inv_freq;
            let (sin, cos) = angle.sin_cos();
            let (sin, cos) = (T::from_f64_lossy(sin), T::from_f64_lossy(cos));
            let a = x[[r, i]];
            let b = x[[r, i + half]];
            out[[r, i]] = a * cos - b * sin;
            out[[r, i + half]] = b * cos + a * sin;
        }
    }
    Ok(out)
}

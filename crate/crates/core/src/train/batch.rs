// SPDX-License-Identifier: Apache-2.0

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// A batch of repeated-sequence rows.
///
/// `loss_mask[[b, p]]` refers to the prediction made at position `p`, whose
/// target is `tokens[[b, p + 1]]`. It is true exactly when that target lies in
/// the repeated second half, so each row has `seq_len / 2` true entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub tokens: Array2<usize>,
    pub loss_mask: Array2<bool>,
}

impl Batch {
    pub fn batch_size(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.ncols()
    }
}

/// Rows whose second half repeats the first; the first half is uniform over
/// the vocabulary.
pub fn make_induction_batch<R: Rng + ?Sized>(
    rng: &mut R,
    batch_size: usize,
    seq_len: usize,
    vocab_size: usize,
) -> Result<Batch> {
    if seq_len < 2 || !seq_len.is_multiple_of(2) {
        return Err(Error::Input(format!("seq_len must be even and >= 2, got {seq_len}")));
    }
    if vocab_size < 2 {
        return Err(Error::Input(format!("vocab_size must be >= 2, got {vocab_size}")));
    }
    let half = seq_len / 2;
    let mut tokens = Array2::<usize>::zeros((batch_size, seq_len));
    for mut row in tokens.rows_mut() {
        for p in 0..half {
            let t = rng.random_range(0..vocab_size);
            row[p] = t;
            row[p + half] = t;
        }
    }
    let loss_mask = Array2::from_shape_fn((batch_size, seq_len), |(_, p)| p + 1 >= half && p + 1 < seq_len);
    Ok(Batch { tokens, loss_mask })
}

/// Probe prompt for analysis: a random first half followed by all but the
/// last token of its repetition. Returns `(tokens, target)` where `target`
/// is the token the repetition predicts next.
pub fn make_probe_sequence<R: Rng + ?Sized>(rng: &mut R, seq_len: usize, vocab_size: usize) -> Result<(Vec<usize>, usize)> {
    let batch = make_induction_batch(rng, 1, seq_len, vocab_size)?;
    let row = batch.tokens.row(0).to_vec();
    let target = row[seq_len - 1];
    Ok((row[..seq_len - 1].to_vec(), target))
}

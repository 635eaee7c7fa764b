// SPDX-License-Identifier: Apache-2.0

//! Desk-scale training on a synthetic repeated-sequence task, producing a
//! checkpoint series in which induction behaviour forms.

mod adam;
mod backprop;
mod batch;
mod trainer;

pub use adam::{adam_step, AdamHyper, OptimizerState};
pub use backprop::{evaluate, loss_and_grads, BatchStats};
pub use batch::{make_induction_batch, make_probe_sequence, Batch};
pub use trainer::{
    checkpoint_file_name, default_schedule, init_weights, train, train_with_progress, TrainConfig, TrainReport,
};

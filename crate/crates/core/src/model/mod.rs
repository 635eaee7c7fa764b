// SPDX-License-Identifier: Apache-2.0

//! Decoder-only transformer forward pass with per-component capture and
//! single-component zero-ablation.

mod component;
mod config;
mod forward;
pub(crate) mod ops;
mod rotary;
mod weights;

pub use component::{enumerate_components, ComponentId};
pub use config::{Activation, BlockStyle, ModelConfig, PosStyle};
pub use forward::{correct_token_logit, forward, ForwardRecord};
pub use rotary::{apply_rotary, apply_rotary_partial};
pub use weights::{LayerWeights, ModelWeights};

/// Floating-point type the model can run in. `f32` for analysis and
/// training, `f64` for gradient checking.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(x: f64) -> Self;
}

impl Scalar for f32 {
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
}

impl Scalar for f64 {
    fn from_f64_lossy(x: f64) -> Self {
        x
    }
}

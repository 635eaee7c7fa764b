// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::model::{ModelConfig, ModelWeights, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub first: ModelWeights<T>,
    pub second: ModelWeights<T>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: &ModelConfig) -> Self {
        OptimizerState {
            first: ModelWeights::zeros(config),
            second: ModelWeights::zeros(config),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(
    weights: &mut ModelWeights<T>,
    grads: &ModelWeights<T>,
    state: &mut OptimizerState<T>,
    hyper: &AdamHyper,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = T::from_f64_lossy(1.0 - hyper.beta1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - hyper.beta2.powi(t));
    let b1 = T::from_f64_lossy(hyper.beta1);
    let b2 = T::from_f64_lossy(hyper.beta2);
    let lr = T::from_f64_lossy(hyper.learning_rate);
    let eps = T::from_f64_lossy(hyper.eps);
    let one = T::one();

    let params = weights.tensors_mut();
    let grads = grads.tensors();
    let firsts = state.first.tensors_mut();
    let seconds = state.second.tensors_mut();
    for (((mut p, g), mut m), mut v) in params
        .into_iter()
        .map(|(_, t)| t)
        .zip(grads.into_iter().map(|(_, t)| t))
        .zip(firsts.into_iter().map(|(_, t)| t))
        .zip(seconds.into_iter().map(|(_, t)| t))
    {
        ndarray::Zip::from(&mut p)
            .and(&g)
            .and(&mut m)
            .and(&mut v)
            .for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}

use serde::{Deserialize, Serialize};

use super::{MlpGrads, MlpParams};
use crate::error::{MepError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: MlpGrads,
    pub second_moment: MlpGrads,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            step_count: 0,
            first_moment: MlpGrads::zeros_like(params),
            second_moment: MlpGrads::zeros_like(params),
            config,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients leave both the
/// parameters and the state untouched.
pub fn adam_step(params: &mut MlpParams, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    grads.same_shape(params)?;
    state.first_moment.same_shape(params)?;
    if !grads.all_finite() {
        return Err(MepError::NonFinite("gradient passed to adam_step"));
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let tensors = params.weights.iter_mut().chain(params.biases.iter_mut());
    let g = grads.weights.iter().chain(&grads.biases);
    let m = state
        .first_moment
        .weights
        .iter_mut()
        .chain(state.first_moment.biases.iter_mut());
    let v = state
        .second_moment
        .weights
        .iter_mut()
        .chain(state.second_moment.biases.iter_mut());
    for (((p, g), m), v) in tensors.zip(g).zip(m).zip(v) {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

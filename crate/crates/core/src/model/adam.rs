use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub first: ModelParams,
    pub second: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            config,
            first: ModelParams::zeros(params.dims),
            second: ModelParams::zeros(params.dims),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place. Gradients are checked for
/// non-finite values before anything is touched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
) -> Result<(), ModelError> {
    if grads.dims != params.dims || state.first.dims != params.dims {
        return Err(ModelError::Shape("gradient shapes differ from parameters".into()));
    }
    for (name, g) in grads.tensor_names().into_iter().zip(grads.tensors()) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteGradient(name));
        }
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first.tensors_mut())
        .zip(state.second.tensors_mut());
    for (((p, g), m), v) in tensors {
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

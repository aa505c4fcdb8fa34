use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { step: 0, m: vec![0.0; len], v: vec![0.0; len], lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update. Consumes the gradient buffer (zeroed afterwards).
pub fn adam_step(params: &mut Tensor, state: &mut AdamState) -> Result<()> {
    let n = params.len();
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam state sized {}/{} for {} parameters",
            state.m.len(),
            state.v.len(),
            n
        )));
    }
    let mut grad = match params.grad_mut() {
        Some(g) => std::mem::take(g),
        None => return Err(Error::InvalidArgument("adam_step without gradient".into())),
    };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let values = params.values_mut();
    for i in 0..n {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        values[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    params.set_grad(grad)?;
    Ok(())
}

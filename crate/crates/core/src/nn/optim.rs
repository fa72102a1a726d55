//! Adam with bias correction.

use super::{NnError, Parameter};

pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Moments are allocated per parameter, in the order of `params`.
    pub fn new(params: &[&Parameter], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }
}

/// One Adam update over all parameters. Gradients must be populated;
/// a non-finite gradient aborts, naming the parameter.
pub fn adam_step(params: &mut [&mut Parameter], state: &mut AdamState) -> Result<(), NnError> {
    assert_eq!(
        params.len(),
        state.first.len(),
        "optimizer state does not match parameter list"
    );
    for p in params.iter() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(p.name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (idx, p) in params.iter_mut().enumerate() {
        let m = &mut state.first[idx];
        let v = &mut state.second[idx];
        for i in 0..p.values.len() {
            let g = p.grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p.values[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

//! Adam with decoupled weight decay.
//!
//! Per step `t` (1-based):
//!
//! ```text
//! m = b1 m + (1 - b1) g
//! v = b2 v + (1 - b2) g^2
//! theta = theta * (1 - lr wd)
//! theta = theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
//! ```

use super::params::ModelParams;
use super::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> OptimizerState {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        OptimizerState {
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One update of a flat parameter block; `step` is the already-incremented
/// step counter.
pub fn adamw_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bias1 = 1.0 - b1.powi(step as i32);
    let bias2 = 1.0 - b2.powi(step as i32);
    let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        theta[i] *= decay;
        theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
}

pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let step = state.step;
    let grads = grads.tensors();
    for (i, mut t) in params.tensors_mut().into_iter().enumerate() {
        let g: Vec<f64> = grads[i].1.iter().copied().collect();
        let mut flat: Vec<f64> = t.iter().copied().collect();
        adamw_update(
            &mut flat,
            &g,
            &mut state.first_moment[i],
            &mut state.second_moment[i],
            step,
            cfg,
        );
        t.iter_mut().zip(flat).for_each(|(dst, src)| *dst = src);
    }
}

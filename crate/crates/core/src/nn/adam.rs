//! Bias-corrected Adam over the parameters of one [`Mlp`].

use crate::error::{Error, Result};
use crate::nn::network::{GradientSet, Mlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) || !(config.epsilon > 0.0) {
            return Err(Error::invalid("Adam needs positive lr and epsilon"));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        let shapes: Vec<usize> = net.params().iter().map(|s| s.len()).collect();
        Ok(Self {
            config,
            step_count: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }
}

/// One Adam update of `net` from `grads`.
///
/// A gradient set that is zero everywhere leaves the block untouched,
/// including the moments and step count: the block did not take part in
/// this step.
pub fn adam_step(net: &mut Mlp, grads: &GradientSet, state: &mut AdamState) -> Result<()> {
    let g = grads.slices();
    {
        let p = net.params();
        let agree = p.len() == g.len()
            && p.len() == state.first_moment.len()
            && p.iter()
                .zip(&g)
                .zip(&state.first_moment)
                .all(|((a, b), m)| a.len() == b.len() && a.len() == m.len());
        if !agree {
            return Err(Error::shape("parameters, gradients and Adam state disagree"));
        }
    }
    if grads.is_zero() {
        return Ok(());
    }
    state.step_count += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step_count as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (((param, grad), m), v) in net
        .params_mut()
        .into_iter()
        .zip(g)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for i in 0..param.len() {
            let gi = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `param` from `grad`.
    pub fn update(&mut self, cfg: &AdamConfig, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::State(format!(
                "optimizer state holds {} entries, parameter {} and gradient {}",
                self.m.len(),
                param.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}

/// Adam over an ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            states: Vec::new(),
        }
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// Updates every parameter from its gradient slot and then zeroes the
    /// gradients. The parameter list must keep the same order across steps.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.states.is_empty() {
            self.states = params.iter().map(|p| AdamState::new(p.len())).collect();
        }
        if self.states.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} parameters but step received {}",
                self.states.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.grad().is_none() {
                return Err(Error::State(format!("parameter {i} has no gradient")));
            }
        }
        for (p, state) in params.iter_mut().zip(&mut self.states) {
            let grad = p.take_grad().expect("checked above");
            state.update(&self.config, p.data_mut(), &grad)?;
            p.accumulate_grad(&vec![0.0; grad.len()])?;
        }
        Ok(())
    }
}

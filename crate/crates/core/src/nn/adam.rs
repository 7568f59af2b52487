use serde::{Deserialize, Serialize};

use super::Parameter;
use crate::error::{KaeError, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay coefficient; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(KaeError::Parameter(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Adam with bias correction and optional decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` from their accumulated gradients.
    ///
    /// The parameter list must keep the same order and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
            self.second = self.first.clone();
        }
        if params.len() != self.first.len() {
            return Err(KaeError::Dimension(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.value.shape() != m.shape() || p.grad.shape() != m.shape() {
                return Err(KaeError::Dimension(format!(
                    "parameter shape {:?} does not match optimizer state {:?}",
                    p.value.shape(),
                    m.shape()
                )));
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let value = p.value.as_mut_slice();
            if weight_decay > 0.0 {
                let keep = 1.0 - lr * weight_decay;
                value.iter_mut().for_each(|x| *x *= keep);
            }
            let grads = p.grad.as_slice();
            for (((x, &g), mi), vi) in value
                .iter_mut()
                .zip(grads)
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

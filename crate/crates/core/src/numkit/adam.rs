use super::mlp::{Gradients, Mlp};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Hyper-parameters of the adaptive-moment updater.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam state for one network. Descends along the supplied gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    config: AdamConfig,
    steps: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        let n = net.num_params();
        Ok(Self { config, steps: 0, first: vec![0.0; n], second: vec![0.0; n] })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One descent step `net <- net - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        if self.first.len() != net.num_params() {
            return Err(invalid("optimizer state does not match network"));
        }
        self.steps += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let bc1 = 1.0 - beta1.powi(self.steps.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - beta2.powi(self.steps.min(i32::MAX as u64) as i32);
        let (m, v) = (&mut self.first, &mut self.second);
        net.zip_params_mut(grads, |i, p, g| {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        });
        if !net.is_finite() {
            return Err(Error::Numerical("parameters became non-finite".into()));
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::layers::Param;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction and coupled L2 weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` using their accumulated gradients.
    ///
    /// Moment buffers are created on the first call; later calls must pass
    /// the same parameter list in the same order.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        if params.len() != self.first.len()
            || params.iter().zip(&self.first).any(|(p, m)| p.len() != m.len())
        {
            return Err(Error::shape(
                "parameter list does not match the optimizer state",
            ));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.len() {
                let g = p.grad[i] + weight_decay * p.value[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Halves (by `factor`) the learning rate after `patience` consecutive
/// non-improving observations of a minimized quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    /// Relative improvement required to reset the patience counter.
    pub threshold: f64,
    best: f64,
    bad_steps: usize,
    history: Vec<f64>,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::Config(format!("scheduler factor {factor} not in (0, 1)")));
        }
        if lr <= 0.0 || min_lr < 0.0 || min_lr > lr {
            return Err(Error::Config(format!(
                "invalid scheduler learning rates lr={lr} min_lr={min_lr}"
            )));
        }
        Ok(PlateauScheduler {
            lr,
            factor,
            patience,
            min_lr,
            threshold: 1e-4,
            best: f64::INFINITY,
            bad_steps: 0,
            history: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn step(&mut self, monitored: f64) -> f64 {
        self.history.push(monitored);
        let improved = if self.best.is_finite() {
            monitored < self.best - self.best.abs() * self.threshold
        } else {
            monitored < self.best
        };
        if improved {
            self.best = monitored;
            self.bad_steps = 0;
        } else {
            self.bad_steps += 1;
            if self.bad_steps >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.bad_steps = 0;
            }
        }
        self.lr
    }
}

//! Adam (with bias correction) and Adadelta, plus the optimizer config both
//! training recipes share.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adadelta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Learning rate; the Adadelta alpha.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    /// Adam defaults matching the downstream-head recipe.
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.90,
            beta2: 0.99,
            rho: 0.95,
            epsilon: 1e-8,
        }
    }

    pub fn adadelta(alpha: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adadelta,
            lr: alpha,
            beta1: 0.90,
            beta2: 0.99,
            rho: 0.95,
            epsilon: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Per-parameter state slots. Adam uses (slot_a, slot_b) = (m, v);
/// Adadelta uses (E[g^2], E[dx^2]).
#[derive(Debug, Clone)]
pub struct ParamState {
    pub slot_a: Vec<f64>,
    pub slot_b: Vec<f64>,
}

pub struct Optimizer {
    pub cfg: OptimizerConfig,
    pub states: Vec<ParamState>,
    pub step_count: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &[(String, Tensor)]) -> Result<Self> {
        cfg.validate()?;
        let states = params
            .iter()
            .map(|(_, p)| ParamState {
                slot_a: vec![0.0; p.numel()],
                slot_b: vec![0.0; p.numel()],
            })
            .collect();
        Ok(Optimizer { cfg, states, step_count: 0 })
    }

    /// Apply one update from the accumulated gradients. `lr` overrides the
    /// config learning rate (schedules feed it); parameters without a
    /// gradient are left untouched. Gradients are not cleared here.
    pub fn step(&mut self, params: &[(String, Tensor)], lr: f64) -> Result<()> {
        assert_eq!(params.len(), self.states.len(), "optimizer/param mismatch");
        self.step_count += 1;
        let t = self.step_count;
        for ((name, p), state) in params.iter().zip(self.states.iter_mut()) {
            let grad = match p.grad() {
                Some(g) => g,
                None => continue,
            };
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in `{name}`")));
            }
            let mut values = p.to_vec();
            match self.cfg.kind {
                OptimizerKind::Adam => {
                    let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.epsilon);
                    let bc1 = 1.0 - b1.powi(t as i32);
                    let bc2 = 1.0 - b2.powi(t as i32);
                    for i in 0..values.len() {
                        let g = grad[i];
                        state.slot_a[i] = b1 * state.slot_a[i] + (1.0 - b1) * g;
                        state.slot_b[i] = b2 * state.slot_b[i] + (1.0 - b2) * g * g;
                        let m_hat = state.slot_a[i] / bc1;
                        let v_hat = state.slot_b[i] / bc2;
                        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                OptimizerKind::Adadelta => {
                    let (rho, eps) = (self.cfg.rho, self.cfg.epsilon);
                    for i in 0..values.len() {
                        let g = grad[i];
                        state.slot_a[i] = rho * state.slot_a[i] + (1.0 - rho) * g * g;
                        let dx = -((state.slot_b[i] + eps) / (state.slot_a[i] + eps)).sqrt() * g;
                        state.slot_b[i] = rho * state.slot_b[i] + (1.0 - rho) * dx * dx;
                        values[i] += lr * dx;
                    }
                }
            }
            p.set_data(&values);
        }
        Ok(())
    }
}

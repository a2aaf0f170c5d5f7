//! Gradient-descent optimizers and the cyclic cosine learning-rate schedule
//! used for snapshot ensembling.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine-annealing cycles over `total_epochs`, restarting every
/// `⌈total_epochs / num_snapshots⌉` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha0: f64,
    pub total_epochs: u32,
    pub num_snapshots: u32,
}

impl ScheduleConfig {
    pub fn new(alpha0: f64, total_epochs: u32, num_snapshots: u32) -> Result<Self> {
        let cfg = Self {
            alpha0,
            total_epochs,
            num_snapshots,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(Error::invalid(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if self.total_epochs == 0 || self.num_snapshots == 0 {
            return Err(Error::invalid("total_epochs and num_snapshots must be >= 1"));
        }
        if self.num_snapshots > self.total_epochs {
            return Err(Error::invalid(format!(
                "num_snapshots ({}) exceeds total_epochs ({})",
                self.num_snapshots, self.total_epochs
            )));
        }
        Ok(())
    }

    /// Epochs per cycle, `⌈T/M⌉`.
    pub fn cycle_len(&self) -> u32 {
        self.total_epochs.div_ceil(self.num_snapshots)
    }
}

/// Learning rate for 1-based epoch `t`:
/// `α₀/2 · (cos(π · ((t−1) mod C) / C) + 1)` with `C = ⌈T/M⌉`.
pub fn lr_at(cfg: &ScheduleConfig, t: u32) -> Result<f64> {
    cfg.validate()?;
    if t == 0 || t > cfg.total_epochs {
        return Err(Error::invalid(format!(
            "epoch {t} outside 1..={}",
            cfg.total_epochs
        )));
    }
    let c = cfg.cycle_len();
    let phase = f64::from((t - 1) % c) / f64::from(c);
    Ok(cfg.alpha0 / 2.0 * ((PI * phase).cos() + 1.0))
}

/// Epochs at which a snapshot is taken: every cycle end, plus the final epoch.
pub fn snapshot_epochs(cfg: &ScheduleConfig) -> Vec<u32> {
    let c = cfg.cycle_len();
    let mut epochs: Vec<u32> = (1..=cfg.total_epochs).filter(|t| t % c == 0).collect();
    if epochs.last() != Some(&cfg.total_epochs) {
        epochs.push(cfg.total_epochs);
    }
    epochs
}

pub trait Optimizer {
    /// Updates `params` in place from `grads`.
    fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()>;

    fn learning_rate(&self) -> f64;

    fn set_learning_rate(&mut self, lr: f64);
}

fn check_shapes(params: usize, grads: usize, state: usize) -> Result<()> {
    if params != grads || params != state {
        return Err(Error::invalid(format!(
            "shape mismatch: {params} parameters, {grads} gradients, state for {state}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            momentum: 0.9,
        }
    }
}

/// SGD with classical momentum: `v ← μ·v − lr·g`, `θ ← θ + v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(cfg: SgdConfig, num_params: usize) -> Result<Self> {
        if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
            return Err(Error::invalid("SGD learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(Self {
            lr: cfg.lr,
            momentum: cfg.momentum,
            velocity: vec![0.0; num_params],
        })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }
}

impl Optimizer for SgdMomentum {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_shapes(params.len(), grads.len(), self.velocity.len())?;
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.momentum * *v - self.lr * g;
            *p += *v;
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
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

/// Adam with bias-corrected first and second moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, num_params: usize) -> Result<Self> {
        if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
            return Err(Error::invalid("Adam learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if cfg.epsilon.is_nan() || cfg.epsilon <= 0.0 {
            return Err(Error::invalid("Adam epsilon must be positive"));
        }
        Ok(Self {
            cfg,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_shapes(params.len(), grads.len(), self.m.len())?;
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let correct1 = 1.0 - beta1.powi(t);
        let correct2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / correct1;
            let v_hat = self.v[i] / correct2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.cfg.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }
}

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::kernels::Real;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { lr: f64 },
    /// Linear warmup from 0 over `warmup` steps, then cosine decay to 0 at `total`.
    WarmupCosine { peak: f64, warmup: usize, total: usize },
}

impl Schedule {
    /// Warmup of `ceil(ratio·total)` steps.
    pub fn warmup_cosine(peak: f64, ratio: f64, total: usize) -> Self {
        let warmup = (ratio * total as f64).ceil() as usize;
        Schedule::WarmupCosine { peak, warmup, total }
    }

    /// Rate applied at (0-based) step `step`.
    pub fn lr(&self, step: usize) -> f64 {
        match *self {
            Schedule::Constant { lr } => lr,
            Schedule::WarmupCosine { peak, warmup, total } => {
                if step < warmup {
                    peak * step as f64 / warmup as f64
                } else {
                    let span = total.saturating_sub(warmup).max(1);
                    let prog = ((step - warmup) as f64 / span as f64).min(1.0);
                    0.5 * peak * (1.0 + (std::f64::consts::PI * prog).cos())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    m: Vec<T>,
    v: Vec<T>,
    decay: Vec<bool>,
    t: u32,
}

impl<T: Real> AdamW<T> {
    /// `no_decay` lists parameter ranges excluded from weight decay.
    pub fn new(cfg: AdamWConfig, n: usize, no_decay: &[Range<usize>]) -> Self {
        let mut decay = vec![true; n];
        for r in no_decay {
            decay[r.clone()].iter_mut().for_each(|d| *d = false);
        }
        AdamW {
            cfg,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            decay,
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c = &self.cfg;
        let b1 = T::from_f64c(c.beta1);
        let b2 = T::from_f64c(c.beta2);
        let one = T::one();
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let step = T::from_f64c(lr / bc1);
        let inv_bc2 = T::from_f64c(1.0 / bc2);
        let eps = T::from_f64c(c.eps);
        let shrink = T::from_f64c(1.0 - lr * c.weight_decay);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            if self.decay[i] {
                params[i] *= shrink;
            }
            let vhat = self.v[i] * inv_bc2;
            params[i] -= step * self.m[i] / (vhat.sqrt() + eps);
        }
    }
}

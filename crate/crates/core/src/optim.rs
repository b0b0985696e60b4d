//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<F: Float> {
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Float> Moments<F> {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![F::zero(); n],
            v: vec![F::zero(); n],
        }
    }
}

/// One in-place Adam update; `t` is the 1-based step count.
pub fn adam_step<F: Float>(param: &mut [F], grad: &[F], mom: &mut Moments<F>, t: u64, cfg: &AdamConfig) {
    let (b1, b2) = (F::c(cfg.beta1), F::c(cfg.beta2));
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    let step = F::c(cfg.lr / c1);
    let c2 = F::c(c2);
    let eps = F::c(cfg.eps);
    for i in 0..param.len() {
        let g = grad[i];
        mom.m[i] = b1 * mom.m[i] + (F::one() - b1) * g;
        mom.v[i] = b2 * mom.v[i] + (F::one() - b2) * g * g;
        let v_hat = mom.v[i] / c2;
        param[i] = param[i] - step * mom.m[i] / (v_hat.sqrt() + eps);
    }
}

/// Adam over a fixed list of named parameters.
pub struct Adam<F: Float> {
    pub cfg: AdamConfig,
    pub params: Vec<(String, Tensor<F>)>,
    pub moments: Vec<Moments<F>>,
    pub t: u64,
}

impl<F: Float> Adam<F> {
    pub fn new(params: Vec<(String, Tensor<F>)>, cfg: AdamConfig) -> Result<Self> {
        if !(cfg.lr >= 0.0) || !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) || !(cfg.eps > 0.0) {
            return Err(Error::Config(format!("invalid adam settings {cfg:?}")));
        }
        let moments = params.iter().map(|(_, p)| Moments::zeros(p.numel())).collect();
        Ok(Self {
            cfg,
            params,
            moments,
            t: 0,
        })
    }

    pub fn zero_grad(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// Applies accumulated gradients. Parameters without a gradient are
    /// treated as having a zero gradient.
    pub fn step(&mut self) {
        self.t += 1;
        for ((_, p), mom) in self.params.iter().zip(&mut self.moments) {
            let g = p.grad().unwrap_or_else(|| vec![F::zero(); p.numel()]);
            adam_step(&mut p.values_mut(), &g, mom, self.t, &self.cfg);
        }
    }
}

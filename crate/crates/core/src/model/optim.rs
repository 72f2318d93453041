use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::error::{Error, Result};

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
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam decay rates must lie in [0, 1)".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config(
                "learning rate must be ≥ 0 and eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Adam moment accumulators, mirroring the parameter tree.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        let cfg = self.config;
        let mut p_all = params.tensors_mut();
        let g_all = grads.tensors();
        let mut m_all = self.first_moment.tensors_mut();
        let mut v_all = self.second_moment.tensors_mut();
        if p_all.len() != g_all.len() || p_all.len() != m_all.len() {
            return Err(Error::ShapeMismatch(
                "gradient tree does not match parameters".into(),
            ));
        }
        for (((name, p), (_, g)), ((_, m), (_, v))) in
            p_all.iter().zip(&g_all).zip(m_all.iter().zip(v_all.iter()))
        {
            if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
                return Err(Error::ShapeMismatch(format!("tensor {name}")));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (((_, p), (_, g)), ((_, m), (_, v))) in p_all
            .iter_mut()
            .zip(&g_all)
            .zip(m_all.iter_mut().zip(v_all.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m.data[i] / bias1;
                let v_hat = v.data[i] / bias2;
                p.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

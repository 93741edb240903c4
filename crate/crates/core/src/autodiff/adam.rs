//! Adam with bias-corrected moments.

use std::collections::HashMap;

use crate::autodiff::graph::ParamSet;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
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

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, step: 0 }
    }

    pub fn with_lr(lr: f32) -> Self {
        Adam::new(AdamConfig {
            lr,
            ..AdamConfig::default()
        })
    }

    /// One update; parameters without a gradient entry are untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &HashMap<usize, Tensor>) -> Result<()> {
        self.step += 1;
        let t = self.step as f32;
        let c1 = 1.0 - self.cfg.beta1.powf(t);
        let c2 = 1.0 - self.cfg.beta2.powf(t);
        for (idx, g) in grads {
            let p = &mut params.params[*idx];
            if g.shape != p.value.shape {
                return Err(Error::ShapeMismatch(format!("adam grad for {}", p.name)));
            }
            for i in 0..g.data.len() {
                let gi = g.data[i];
                if !gi.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of {}", p.name)));
                }
                p.m.data[i] = self.cfg.beta1 * p.m.data[i] + (1.0 - self.cfg.beta1) * gi;
                p.v.data[i] = self.cfg.beta2 * p.v.data[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let mhat = p.m.data[i] / c1;
                let vhat = p.v.data[i] / c2;
                p.value.data[i] -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps);
                if !p.value.data[i].is_finite() {
                    return Err(Error::NonFinite(format!("parameter {}", p.name)));
                }
            }
        }
        Ok(())
    }
}

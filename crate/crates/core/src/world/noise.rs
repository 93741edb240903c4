//! Gaussian-mixture noise models for actuation and odometry errors.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEG: f64 = std::f64::consts::PI / 180.0;

/// One mixture component: diagonal Gaussian over (dx m, dy m, dphi rad).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: [f64; 3],
    pub stddev: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmNoiseModel {
    pub components: Vec<GmmComponent>,
}

impl GmmNoiseModel {
    pub fn zero() -> Self {
        GmmNoiseModel {
            components: vec![GmmComponent {
                weight: 1.0,
                mean: [0.0; 3],
                stddev: [0.0; 3],
            }],
        }
    }

    /// Default actuation noise: a frequent small-error mode plus a rare
    /// larger slip mode.
    pub fn act_default() -> Self {
        GmmNoiseModel {
            components: vec![
                GmmComponent {
                    weight: 0.9,
                    mean: [0.005, 0.001, 0.3 * DEG],
                    stddev: [0.005, 0.002, 0.3 * DEG],
                },
                GmmComponent {
                    weight: 0.1,
                    mean: [0.02, 0.005, 1.5 * DEG],
                    stddev: [0.01, 0.005, 1.0 * DEG],
                },
            ],
        }
    }

    /// Default odometry noise: the actuation model at half magnitude.
    pub fn sen_default() -> Self {
        let mut m = Self::act_default();
        for c in &mut m.components {
            for v in c.mean.iter_mut().chain(c.stddev.iter_mut()) {
                *v *= 0.5;
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::ConfigInvalid("noise model has no components".into()));
        }
        let mut total = 0.0;
        for c in &self.components {
            if c.weight <= 0.0 {
                return Err(Error::ConfigInvalid("noise weight must be > 0".into()));
            }
            if c.stddev.iter().any(|&s| s < 0.0) {
                return Err(Error::ConfigInvalid("noise stddev must be >= 0".into()));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::ConfigInvalid(format!("noise weights sum to {total}")));
        }
        Ok(())
    }

    /// Mixture mean, componentwise.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for c in &self.components {
            for i in 0..3 {
                m[i] += c.weight * c.mean[i];
            }
        }
        m
    }

    /// Draw: pick a component by weight, then a diagonal-Gaussian sample.
    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = &self.components[self.components.len() - 1];
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = if chosen.stddev[i] > 0.0 {
                Normal::new(chosen.mean[i], chosen.stddev[i]).unwrap().sample(rng)
            } else {
                chosen.mean[i]
            };
        }
        out
    }
}

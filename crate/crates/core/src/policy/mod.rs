//! Gain-adaptation policy: features, networks and normalization.

pub mod features;
pub mod mlp;
pub mod normalize;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use features::{build_features, privileged_features, FeatureConfig, FeatureFilters, FeatureVector, PrivilegedFeatures, FEATURE_DIM};
pub use mlp::{param_count, Mlp, MlpCache};
pub use normalize::Normalizer;

use crate::error::{Error, Result};

/// Logits are clamped to this magnitude before the sigmoid so outputs stay
/// strictly inside (0, 1) in floating point.
pub const LOGIT_CLAMP: f64 = 30.0;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub init_log_std: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32, 32], leaky_slope: 0.01, init_log_std: 0.2f64.ln() }
    }
}

impl NetConfig {
    pub fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        std::iter::once(input).chain(self.hidden.iter().copied()).chain(std::iter::once(output)).collect()
    }
}

/// Actor: sigmoid-headed network plus a state-independent log standard
/// deviation used for exploration in logit space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub mlp: Mlp,
    pub log_std: Vec<f64>,
}

/// One exploratory action draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub logits: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl PolicyNet {
    pub fn new<R: Rng>(input: usize, output: usize, cfg: &NetConfig, rng: &mut R) -> Self {
        let mlp = Mlp::init(&cfg.dims(input, output), cfg.leaky_slope, 0.1, rng);
        Self { mlp, log_std: vec![cfg.init_log_std; output] }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.mlp.dims
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn action_output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.mlp.params.len() + self.log_std.len()
    }

    pub fn mean_logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.mlp.forward(z)
    }

    /// Deterministic action in (0, 1).
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mlp.forward(z)?.into_iter().map(sigmoid).collect())
    }

    /// Gradient of `upstream · forward(z)` over `[mlp params, log_std]`.
    pub fn backward(&self, z: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let cache = self.mlp.forward_cached(z)?;
        if upstream.len() != self.action_output_dim() {
            return Err(Error::Dimension { expected: self.action_output_dim(), got: upstream.len() });
        }
        let du: Vec<f64> = cache
            .output
            .iter()
            .zip(upstream)
            .map(|(&u, &g)| if u.abs() >= LOGIT_CLAMP { 0.0 } else { g * sigmoid(u) * (1.0 - sigmoid(u)) })
            .collect();
        let mut grad = vec![0.0; self.param_count()];
        self.mlp.backward(&cache, &du, &mut grad[..self.mlp.params.len()]);
        Ok(grad)
    }

    pub fn sample<R: Rng>(&self, z: &[f64], rng: &mut R) -> Result<ActionSample> {
        let mean = self.mlp.forward(z)?;
        let logits: Vec<f64> = mean.iter().zip(&self.log_std).map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal)).collect();
        let log_prob = gaussian_log_prob(&mean, &self.log_std, &logits);
        let action = logits.iter().map(|&x| sigmoid(x)).collect();
        Ok(ActionSample { logits, action, log_prob })
    }

    pub fn log_prob(&self, z: &[f64], logits: &[f64]) -> Result<f64> {
        Ok(gaussian_log_prob(&self.mlp.forward(z)?, &self.log_std, logits))
    }

    /// Log-probability of `logits`, accumulating `scale · ∂logp/∂θ` into `grad`.
    pub fn log_prob_grad(&self, z: &[f64], logits: &[f64], scale: f64, grad: &mut [f64]) -> Result<f64> {
        let cache = self.mlp.forward_cached(z)?;
        let n = self.mlp.params.len();
        let mut du = vec![0.0; logits.len()];
        for k in 0..logits.len() {
            let inv_var = (-2.0 * self.log_std[k]).exp();
            let r = logits[k] - cache.output[k];
            du[k] = scale * r * inv_var;
            grad[n + k] += scale * (r * r * inv_var - 1.0);
        }
        self.mlp.backward(&cache, &du, &mut grad[..n]);
        Ok(gaussian_log_prob(&cache.output, &self.log_std, logits))
    }

    /// Differential entropy of the logit-space Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 + LN_SQRT_2PI).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.mlp.params.iter().chain(&self.log_std).copied().collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: p.len() });
        }
        let n = self.mlp.params.len();
        self.mlp.params.copy_from_slice(&p[..n]);
        self.log_std.copy_from_slice(&p[n..]);
        Ok(())
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), xi)| {
            let r = (xi - m) * (-ls).exp();
            -0.5 * r * r - ls - LN_SQRT_2PI
        })
        .sum()
}

/// Critic: same topology, scalar linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub mlp: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng>(input: usize, cfg: &NetConfig, rng: &mut R) -> Self {
        Self { mlp: Mlp::init(&cfg.dims(input, 1), cfg.leaky_slope, 1.0, rng) }
    }

    pub fn forward(&self, z: &[f64]) -> Result<f64> {
        Ok(self.mlp.forward(z)?[0])
    }

    /// Value and accumulated `scale · ∂V/∂θ`.
    pub fn backward(&self, z: &[f64], scale: f64, grad: &mut [f64]) -> Result<f64> {
        let cache = self.mlp.forward_cached(z)?;
        self.mlp.backward(&cache, &[scale], grad);
        Ok(cache.output[0])
    }

    pub fn param_count(&self) -> usize {
        self.mlp.params.len()
    }
}

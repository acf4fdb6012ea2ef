//! Clipped-surrogate policy optimization with a separate value regressor.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::adam::{clip_grad_norm, Adam};
use crate::learning::gae::gae_advantages;
use crate::learning::rollout::Batch;
use crate::policy::{PolicyNet, ValueNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub value_lr: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Bounds applied to the exploration log standard deviation after each step.
    pub log_std_range: (f64, f64),
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 1024,
            lr: 3e-4,
            value_lr: 1e-3,
            entropy_coef: 1e-3,
            max_grad_norm: 1.0,
            log_std_range: (-5.0, 1.0),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.lambda)
            && self.clip >= 0.0
            && self.epochs > 0
            && self.minibatch > 0
            && self.lr > 0.0
            && self.value_lr > 0.0
            && self.max_grad_norm > 0.0
            && self.log_std_range.0 <= self.log_std_range.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid PPO hyperparameters".into()))
        }
    }
}

/// One optimization sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    pub logits: Vec<f64>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub value_target: f64,
}

pub fn samples_from_batch(batch: &Batch, cfg: &PpoConfig) -> Vec<PpoSample> {
    let (adv, ret) = gae_advantages(batch, cfg.gamma, cfg.lambda);
    batch
        .transitions()
        .zip(adv.into_iter().zip(ret))
        .map(|(t, (a, r))| PpoSample { obs: t.obs.clone(), logits: t.logits.clone(), old_log_prob: t.log_prob, advantage: a, value_target: r })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean `log π_old − log π_new` over the batch after the update.
    pub kl: f64,
    /// Fraction of samples whose ratio left the clip interval in the last pass.
    pub clip_fraction: f64,
}

/// Clipped surrogate `min(ρA, clip(ρ, 1±ε)A)` and its derivative with
/// respect to `log π_new`.
pub fn surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, ratio * advantage)
    } else {
        (clipped, 0.0)
    }
}

/// Mean surrogate of the batch under the current actor.
pub fn surrogate_objective(actor: &PolicyNet, samples: &[PpoSample], eps: f64) -> Result<f64> {
    let mut s = 0.0;
    for x in samples {
        let ratio = (actor.log_prob(&x.obs, &x.logits)? - x.old_log_prob).exp();
        s += surrogate(ratio, x.advantage, eps).0;
    }
    Ok(s / samples.len().max(1) as f64)
}

pub fn ppo_update<R: Rng>(
    actor: &mut PolicyNet,
    critic: &mut ValueNet,
    opt_actor: &mut Adam,
    opt_critic: &mut Adam,
    samples: &[PpoSample],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    if samples.is_empty() {
        return Err(Error::Training("empty PPO batch".into()));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    let mut stats = PpoStats::default();
    let n_actor = actor.param_count();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        let (mut clipped, mut pl, mut vl) = (0usize, 0.0, 0.0);
        for chunk in idx.chunks(cfg.minibatch) {
            let inv = 1.0 / chunk.len() as f64;
            let mut ga = vec![0.0; n_actor];
            let mut gc = vec![0.0; critic.param_count()];
            for &i in chunk {
                let x = &samples[i];
                let ratio = (actor.log_prob(&x.obs, &x.logits)? - x.old_log_prob).exp();
                let (obj, d_logp) = surrogate(ratio, x.advantage, cfg.clip);
                if (ratio - 1.0).abs() > cfg.clip {
                    clipped += 1;
                }
                pl -= obj;
                if d_logp != 0.0 {
                    actor.log_prob_grad(&x.obs, &x.logits, -d_logp * inv, &mut ga)?;
                }
                let v = critic.forward(&x.obs)?;
                let err = v - x.value_target;
                vl += err * err;
                critic.backward(&x.obs, 2.0 * err * inv, &mut gc)?;
            }
            // entropy bonus depends only on log_std
            for g in &mut ga[n_actor - actor.log_std.len()..] {
                *g -= cfg.entropy_coef;
            }
            if !(ga.iter().all(|g| g.is_finite()) && gc.iter().all(|g| g.is_finite())) {
                return Err(Error::Divergent);
            }
            clip_grad_norm(&mut ga, cfg.max_grad_norm);
            clip_grad_norm(&mut gc, cfg.max_grad_norm);
            let mut p = actor.flat_params();
            opt_actor.step(&mut p, &ga);
            actor.set_flat_params(&p)?;
            let (lo, hi) = cfg.log_std_range;
            actor.log_std.iter_mut().for_each(|ls| *ls = ls.clamp(lo, hi));
            opt_critic.step(&mut critic.mlp.params, &gc);
        }
        let n = samples.len() as f64;
        stats.policy_loss = pl / n;
        stats.value_loss = vl / n;
        stats.clip_fraction = clipped as f64 / n;
    }
    let mut kl = 0.0;
    for x in samples {
        kl += x.old_log_prob - actor.log_prob(&x.obs, &x.logits)?;
    }
    stats.kl = kl / samples.len() as f64;
    stats.entropy = actor.entropy();
    let finite = [stats.policy_loss, stats.value_loss, stats.kl].iter().all(|v| v.is_finite());
    if !finite || !actor.flat_params().iter().all(|p| p.is_finite()) || !critic.mlp.params.iter().all(|p| p.is_finite()) {
        return Err(Error::Divergent);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_samples(actor: &PolicyNet, n: usize, rng: &mut ChaCha8Rng) -> Vec<PpoSample> {
        (0..n)
            .map(|i| {
                let obs: Vec<f64> = (0..3).map(|k| ((i * 7 + k) as f64 * 0.37).sin()).collect();
                let s = actor.sample(&obs, rng).unwrap();
                PpoSample { obs, logits: s.logits, old_log_prob: s.log_prob, advantage: ((i as f64) * 1.3).cos(), value_target: 0.0 }
            })
            .collect()
    }

    #[test]
    fn unchanged_policy_has_unit_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let actor = PolicyNet::new(3, 2, &NetConfig::default(), &mut rng);
        let samples = random_samples(&actor, 50, &mut rng);
        for x in &samples {
            let ratio = (actor.log_prob(&x.obs, &x.logits).unwrap() - x.old_log_prob).exp();
            assert!((ratio - 1.0).abs() < 1e-10);
        }
        let mean_adv = samples.iter().map(|s| s.advantage).sum::<f64>() / 50.0;
        assert!((surrogate_objective(&actor, &samples, 0.2).unwrap() - mean_adv).abs() < 1e-10);
    }

    #[test]
    fn zero_clip_kills_gradient_off_unity() {
        assert_eq!(surrogate(1.1, 1.0, 0.0), (1.0, 0.0));
        assert_eq!(surrogate(0.9, -1.0, 0.0), (-1.0, 0.0));
        // Pessimistic side keeps the gradient.
        assert_eq!(surrogate(0.9, 1.0, 0.0).1, 0.9);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let actor = PolicyNet::new(3, 2, &NetConfig { hidden: vec![8], ..Default::default() }, &mut rng);
        let samples = random_samples(&actor, 20, &mut rng);
        // Perturb so ratios differ from one but stay inside the clip band.
        let mut moved = actor.clone();
        let mut p = moved.flat_params();
        p.iter_mut().enumerate().for_each(|(i, v)| *v += 0.01 * ((i as f64) * 0.9).sin());
        moved.set_flat_params(&p).unwrap();
        let mut g = vec![0.0; moved.param_count()];
        for x in &samples {
            let ratio = (moved.log_prob(&x.obs, &x.logits).unwrap() - x.old_log_prob).exp();
            let (_, d) = surrogate(ratio, x.advantage, 10.0);
            moved.log_prob_grad(&x.obs, &x.logits, d / 20.0, &mut g).unwrap();
        }
        let h = 1e-6;
        for i in (0..p.len()).step_by(7) {
            let mut a = moved.clone();
            let mut q = p.clone();
            q[i] += h;
            a.set_flat_params(&q).unwrap();
            let up = surrogate_objective(&a, &samples, 10.0).unwrap();
            q[i] -= 2.0 * h;
            a.set_flat_params(&q).unwrap();
            let down = surrogate_objective(&a, &samples, 10.0).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn update_improves_surrogate_and_reports_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut actor = PolicyNet::new(3, 2, &NetConfig::default(), &mut rng);
        let mut critic = ValueNet::new(3, &NetConfig::default(), &mut rng);
        let samples = random_samples(&actor, 256, &mut rng);
        let before = surrogate_objective(&actor, &samples, 0.2).unwrap();
        let cfg = PpoConfig { minibatch: 64, ..Default::default() };
        let mut oa = Adam::new(actor.param_count(), cfg.lr);
        let mut oc = Adam::new(critic.param_count(), cfg.value_lr);
        let stats = ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &samples, &cfg, &mut rng).unwrap();
        assert!(surrogate_objective(&actor, &samples, 0.2).unwrap() > before);
        assert!(stats.kl.is_finite() && stats.clip_fraction >= 0.0 && stats.clip_fraction <= 1.0);
    }

    #[test]
    fn non_finite_advantage_is_divergent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut actor = PolicyNet::new(3, 2, &NetConfig::default(), &mut rng);
        let mut critic = ValueNet::new(3, &NetConfig::default(), &mut rng);
        let mut samples = random_samples(&actor, 8, &mut rng);
        samples[3].advantage = f64::NAN;
        let cfg = PpoConfig::default();
        let mut oa = Adam::new(actor.param_count(), cfg.lr);
        let mut oc = Adam::new(critic.param_count(), cfg.value_lr);
        let r = ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &samples, &cfg, &mut rng);
        assert!(matches!(r, Err(Error::Divergent)));
    }
}

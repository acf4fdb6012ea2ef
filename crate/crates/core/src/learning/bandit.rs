//! One-dimensional bandit used to sanity-check the PPO machinery: a single
//! action in (0, 1), reward `−(a − target)²`, one-step episodes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::mix_seed;
use crate::error::Result;
use crate::learning::adam::Adam;
use crate::learning::gae::normalize;
use crate::learning::ppo::{ppo_update, PpoConfig, PpoSample};
use crate::policy::{NetConfig, PolicyNet, ValueNet};

pub struct BanditRun {
    /// Deterministic (mean-path) action after each epoch.
    pub mean_actions: Vec<f64>,
}

pub fn bandit_toy(target: f64, epochs: usize, samples_per_epoch: usize, seed: u64) -> Result<BanditRun> {
    let net_cfg = NetConfig { hidden: vec![16], ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actor = PolicyNet::new(1, 1, &net_cfg, &mut rng);
    let mut critic = ValueNet::new(1, &net_cfg, &mut rng);
    let cfg = PpoConfig { gamma: 0.0, lambda: 0.0, minibatch: 64, lr: 3e-3, value_lr: 3e-3, ..Default::default() };
    let mut oa = Adam::new(actor.param_count(), cfg.lr);
    let mut oc = Adam::new(critic.param_count(), cfg.value_lr);
    let obs = vec![1.0];
    let mut mean_actions = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut draw = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64));
        let v = critic.forward(&obs)?;
        let mut samples = Vec::with_capacity(samples_per_epoch);
        for _ in 0..samples_per_epoch {
            let s = actor.sample(&obs, &mut draw)?;
            let r = -(s.action[0] - target).powi(2);
            samples.push(PpoSample { obs: obs.clone(), logits: s.logits, old_log_prob: s.log_prob, advantage: r - v, value_target: r });
        }
        let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
        normalize(&mut adv);
        samples.iter_mut().zip(adv).for_each(|(s, a)| s.advantage = a);
        ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &samples, &cfg, &mut draw)?;
        mean_actions.push(actor.forward(&obs)?[0]);
    }
    Ok(BanditRun { mean_actions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_to_optimum() {
        let run = bandit_toy(0.8, 200, 256, 1).unwrap();
        let last = *run.mean_actions.last().unwrap();
        assert!((last - 0.8).abs() < 0.05, "{last}");
    }
}

//! Self-describing JSON checkpoints of a trained gain policy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::reward::RewardWeights;
use crate::learning::rollout::InputKind;
use crate::learning::train::Agent;
use crate::policy::mlp::param_count;
use crate::policy::{Mlp, NetConfig, Normalizer, PolicyNet, ValueNet};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Stage or command that produced it.
    pub label: String,
    pub input: InputKind,
    pub input_dim: usize,
    pub action_dim: usize,
    /// Row-major layer weights followed by biases, per layer.
    pub actor: PolicyNet,
    pub critic: Option<ValueNet>,
    pub normalizer: Normalizer,
    /// Reward weights in force during training, when it was RL.
    pub reward: Option<RewardWeights>,
}

impl Checkpoint {
    pub fn new(label: &str, input: InputKind, actor: PolicyNet, critic: Option<ValueNet>, normalizer: Normalizer, reward: Option<RewardWeights>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            label: label.into(),
            input,
            input_dim: actor.input_dim(),
            action_dim: actor.action_output_dim(),
            actor,
            critic,
            normalizer,
            reward,
        }
    }

    pub fn from_agent(label: &str, agent: &Agent, reward: Option<RewardWeights>) -> Self {
        Self::new(label, agent.input, agent.actor.clone(), Some(agent.critic.clone()), agent.normalizer.clone(), reward)
    }

    /// An agent for further training; a missing critic is freshly initialized.
    pub fn into_agent(self, net: &NetConfig, seed: u64) -> Agent {
        let fresh = Agent::new(self.input, self.input_dim, self.action_dim, self.normalizer.clone(), net, seed);
        Agent { input: self.input, actor: self.actor, critic: self.critic.unwrap_or(fresh.critic), normalizer: self.normalizer }
    }

    fn check(&self) -> std::result::Result<(), String> {
        let mlp_ok = |m: &Mlp| m.dims.len() >= 2 && m.dims.iter().all(|&d| d > 0) && m.params.len() == param_count(&m.dims);
        if !mlp_ok(&self.actor.mlp) || self.critic.as_ref().is_some_and(|c| !mlp_ok(&c.mlp)) {
            return Err("parameter count does not match layer sizes".into());
        }
        let n = self.normalizer.dim();
        let dims_ok = self.actor.input_dim() == self.input_dim
            && self.actor.action_output_dim() == self.action_dim
            && self.actor.log_std.len() == self.action_dim
            && n == self.input_dim
            && self.normalizer.m2.len() == n
            && self.critic.as_ref().map_or(true, |c| c.mlp.dims[0] == self.input_dim && *c.mlp.dims.last().unwrap() == 1);
        if !dims_ok {
            return Err("inconsistent dimensions".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let corrupt = |reason: String| Error::Corrupt { path: path.to_path_buf(), reason };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let found = value.get("format_version").and_then(serde_json::Value::as_u64).ok_or_else(|| corrupt("missing format_version".into()))?;
    if found != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::Version { found: u32::try_from(found).unwrap_or(u32::MAX), expected: CHECKPOINT_VERSION });
    }
    let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    ckpt.check().map_err(corrupt)?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = NetConfig::default();
        let mut norm = Normalizer::new(6);
        for _ in 0..50 {
            norm.update(&(0..6).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>());
        }
        norm.freeze();
        Checkpoint::new("t", InputKind::Student, PolicyNet::new(6, 2, &net, &mut rng), Some(ValueNet::new(6, &net, &mut rng)), norm, None)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let ck = sample(3);
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let (a, b) = (ck.normalizer.apply(&x), back.normalizer.apply(&x));
            assert_eq!(a, b);
            assert_eq!(ck.actor.forward(&a).unwrap(), back.actor.forward(&b).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let text = sample(1).to_json().unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn wrong_version_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut ck = sample(1);
        ck.format_version = 7;
        save_checkpoint(&ck, &path).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Version { found: 7, expected: 1 })));
    }

    #[test]
    fn mismatched_dims_are_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut ck = sample(1);
        ck.actor.mlp.params.pop();
        save_checkpoint(&ck, &path).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt { .. })));
    }
}

//! Training loops: PPO on either observation, teacher distillation, and the
//! staged fine-tuning curriculum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{mix_seed, ControllerMode, Env, SimConfig};
use crate::error::{Error, Result};
use crate::learning::adam::Adam;
use crate::learning::distill::{fit, mse, Dataset, DistillConfig, DistillReport};
use crate::learning::ppo::{ppo_update, samples_from_batch, PpoConfig};
use crate::learning::reward::{RewardTerms, RewardWeights};
use crate::learning::rollout::{collect_labeled, collect_rollouts, epoch_seeds, raw_input, Actor, InputKind};
use crate::learning::teacher::TeacherSpec;
use crate::policy::{NetConfig, Normalizer, PolicyNet, ValueNet};
use crate::scenarios::ScenarioSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub instances: usize,
    pub epochs: usize,
    pub ppo: PpoConfig,
    pub net: NetConfig,
    /// Reuse the first epoch's instances (and exploration noise streams) in
    /// every epoch, so successive returns differ only through the policy.
    pub common_random_numbers: bool,
    /// Stop a stage once the best mean return is this many epochs old.
    pub patience: Option<usize>,
    /// Decay both step sizes linearly to zero over `epochs`.
    pub anneal_lr: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { instances: 8, epochs: 500, ppo: PpoConfig::default(), net: NetConfig::default(), common_random_numbers: false, patience: Some(300), anneal_lr: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::Config("training needs at least one instance".into()));
        }
        self.ppo.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub stage: String,
    pub epoch: usize,
    pub mean_return: f64,
    /// Per-step means of the weighted reward terms.
    pub terms: RewardTerms,
    pub kl: f64,
    pub clip_fraction: f64,
    pub fault_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub gain_violations: usize,
    pub samples: usize,
}

/// Actor, critic and the frozen input statistics they were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub input: InputKind,
    pub actor: PolicyNet,
    pub critic: ValueNet,
    pub normalizer: Normalizer,
}

impl Agent {
    pub fn new(input: InputKind, input_dim: usize, action_dim: usize, normalizer: Normalizer, net: &NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 5));
        let actor = PolicyNet::new(input_dim, action_dim, net, &mut rng);
        let critic = ValueNet::new(input_dim, net, &mut rng);
        Self { input, actor, critic, normalizer }
    }

    pub fn deterministic(&self) -> Actor<'_> {
        Actor::Deterministic { net: &self.actor, normalizer: &self.normalizer, input: self.input }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Last agent whose update completed without divergence.
    pub agent: Agent,
    pub history: Vec<EpochStats>,
    pub diverged: bool,
    pub stopped_early: bool,
}

/// Input dimension of an observation kind under `sim`.
pub fn input_dim(sim: &SimConfig, input: InputKind) -> usize {
    match input {
        InputKind::Student => crate::policy::FEATURE_DIM,
        InputKind::Privileged => crate::policy::PrivilegedFeatures::dim(sim.features.probe_offsets.len()),
    }
}

/// Frozen input statistics from constant-action episodes.
pub fn input_statistics(sim: &SimConfig, input: InputKind, action: &[f64], seeds: &[u64]) -> Result<Normalizer> {
    let mut norm = Normalizer::new(input_dim(sim, input));
    for &seed in seeds {
        let mut env = Env::new(sim, ControllerMode::Variable, seed)?;
        let mut obs = env.reset()?;
        while !env.is_done() {
            norm.update(&raw_input(&env, &obs, input));
            obs = env.step(action)?.obs;
        }
    }
    norm.freeze();
    Ok(norm)
}

/// Reward weights rescaled on a fixed-gain batch so that active terms share
/// one magnitude.
pub fn rebalance_rewards(sim: &SimConfig, seeds: &[u64], parallel: bool) -> Result<RewardWeights> {
    let batch = collect_rollouts(sim, Actor::Constant(&sim.gains.baseline_action), seeds, None, parallel)?;
    Ok(sim.reward.rebalanced(&batch.term_means()))
}

/// PPO from the agent's current parameters. `on_epoch` sees every epoch's
/// statistics as soon as they are available.
pub fn train_ppo(
    sim: &SimConfig,
    agent: Agent,
    cfg: &TrainConfig,
    seed: u64,
    stage: &str,
    parallel: bool,
    mut on_epoch: impl FnMut(&EpochStats, &Agent) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut agent = agent;
    let mut opt_a = Adam::new(agent.actor.param_count(), cfg.ppo.lr);
    let mut opt_c = Adam::new(agent.critic.param_count(), cfg.ppo.value_lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    let (mut best, mut best_epoch) = (f64::NEG_INFINITY, 0usize);
    for epoch in 0..cfg.epochs {
        if cfg.anneal_lr {
            let frac = 1.0 - epoch as f64 / cfg.epochs as f64;
            opt_a.lr = cfg.ppo.lr * frac;
            opt_c.lr = cfg.ppo.value_lr * frac;
        }
        let seeds = epoch_seeds(seed, if cfg.common_random_numbers { 0 } else { epoch as u64 }, cfg.instances);
        let actor = Actor::Explore { net: &agent.actor, value: &agent.critic, normalizer: &agent.normalizer, input: agent.input };
        let batch = collect_rollouts(sim, actor, &seeds, None, parallel)?;
        let samples = samples_from_batch(&batch, &cfg.ppo);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x2000 + epoch as u64));
        let mut next = agent.clone();
        let stats = match ppo_update(&mut next.actor, &mut next.critic, &mut opt_a, &mut opt_c, &samples, &cfg.ppo, &mut rng) {
            Ok(s) => s,
            Err(Error::Divergent) => return Ok(TrainOutcome { agent, history, diverged: true, stopped_early: false }),
            Err(e) => return Err(e),
        };
        let record = EpochStats {
            stage: stage.to_string(),
            epoch,
            mean_return: batch.mean_return(),
            terms: batch.term_means(),
            kl: stats.kl,
            clip_fraction: stats.clip_fraction,
            fault_rate: batch.fault_rate(),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            gain_violations: batch.gain_violations(),
            samples: samples.len(),
        };
        // The batch was produced by `agent`, so the stats describe it.
        on_epoch(&record, &agent)?;
        agent = next;
        if record.mean_return > best {
            best = record.mean_return;
            best_epoch = epoch;
        }
        history.push(record);
        if let Some(p) = cfg.patience {
            if epoch - best_epoch >= p {
                return Ok(TrainOutcome { agent, history, diverged: false, stopped_early: true });
            }
        }
    }
    Ok(TrainOutcome { agent, history, diverged: false, stopped_early: false })
}

/// Runs stages in order, each starting from the previous stage's agent.
pub fn curriculum(
    sim: &SimConfig,
    agent: Agent,
    stages: &[(String, ScenarioSpec, usize)],
    cfg: &TrainConfig,
    seed: u64,
    parallel: bool,
    mut on_epoch: impl FnMut(&EpochStats, &Agent) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut agent = agent;
    let mut history = Vec::new();
    for (k, (name, scenario, epochs)) in stages.iter().enumerate() {
        let stage_sim = SimConfig { scenario: scenario.clone(), ..sim.clone() };
        let stage_cfg = TrainConfig { epochs: *epochs, ..cfg.clone() };
        let out = train_ppo(&stage_sim, agent, &stage_cfg, mix_seed(seed, 0x3000 + k as u64), name, parallel, &mut on_epoch)?;
        history.extend(out.history);
        agent = out.agent;
        if out.diverged {
            return Ok(TrainOutcome { agent, history, diverged: true, stopped_early: false });
        }
    }
    Ok(TrainOutcome { agent, history, diverged: false, stopped_early: false })
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub net: PolicyNet,
    pub normalizer: Normalizer,
    pub report: DistillReport,
    /// Largest per-step action gap between student and teacher along a
    /// student rollout on a fresh instance.
    pub trace_max_deviation: f64,
}

/// Teacher rollouts → supervised fit → optional relabeled student rollouts,
/// evaluated on teacher episodes from seeds never trained on.
pub fn distill_pipeline(sim: &SimConfig, teacher: &TeacherSpec, cfg: &DistillConfig, net_cfg: &NetConfig, seed: u64, parallel: bool) -> Result<DistillOutcome> {
    let teacher_actor = Actor::Teacher(teacher);
    let train_seeds = epoch_seeds(mix_seed(seed, 6), 0, cfg.instances);
    let held_n = ((cfg.instances as f64 * cfg.holdout_fraction).round() as usize).max(1);
    let held_seeds = epoch_seeds(mix_seed(seed, 7), 0, held_n);

    let mut train = Dataset::default();
    train.extend_from_episodes(&collect_labeled(sim, teacher_actor, teacher, &train_seeds, parallel)?);
    let mut held = Dataset::default();
    held.extend_from_episodes(&collect_labeled(sim, teacher_actor, teacher, &held_seeds, parallel)?);

    let normalizer = train.normalizer();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 8));
    let out_dim = sim.action_dim();
    let mut net = PolicyNet::new(normalizer.dim(), out_dim, net_cfg, &mut rng);
    let mut train_mse = fit(&mut net, &normalizer, &train, cfg, &mut rng)?;
    for round in 0..cfg.dagger_rounds {
        let seeds = epoch_seeds(mix_seed(seed, 9), round as u64, cfg.instances);
        let student = Actor::Deterministic { net: &net, normalizer: &normalizer, input: InputKind::Student };
        train.extend_from_episodes(&collect_labeled(sim, student, teacher, &seeds, parallel)?);
        train_mse = fit(&mut net, &normalizer, &train, cfg, &mut rng)?;
    }
    let heldout_mse = mse(&net, &normalizer, &held)?;
    let trace_max_deviation = trace_deviation(sim, &net, &normalizer, teacher, mix_seed(seed, 10))?;
    Ok(DistillOutcome { net, normalizer, report: DistillReport { train_mse, heldout_mse, samples: train.len() }, trace_max_deviation })
}

/// Max |student − teacher| over actions along a deterministic student rollout.
pub fn trace_deviation(sim: &SimConfig, net: &PolicyNet, normalizer: &Normalizer, teacher: &TeacherSpec, seed: u64) -> Result<f64> {
    let student = Actor::Deterministic { net, normalizer, input: InputKind::Student };
    let ep = crate::learning::rollout::run_labeled_episode(sim, student, Some(teacher), seed, None)?;
    Ok(ep
        .transitions
        .iter()
        .flat_map(|t| t.action.iter().zip(t.label.as_deref().unwrap_or(&[])).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_sim() -> SimConfig {
        let mut sim = SimConfig::default();
        sim.scenario.trajectory.sliding_time = 1.0;
        sim
    }

    #[test]
    fn ppo_runs_and_is_reproducible() {
        let sim = short_sim();
        let cfg = TrainConfig { instances: 2, epochs: 3, ..Default::default() };
        let norm = input_statistics(&sim, InputKind::Student, &sim.gains.baseline_action, &[1]).unwrap();
        let agent = Agent::new(InputKind::Student, 6, 2, norm, &cfg.net, 3);
        let a = train_ppo(&sim, agent.clone(), &cfg, 3, "t", false, |_, _| Ok(())).unwrap();
        let b = train_ppo(&sim, agent, &cfg, 3, "t", true, |_, _| Ok(())).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.agent, b.agent);
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|h| h.gain_violations == 0 && h.samples == 2 * sim.sliding_steps()));
    }

    #[test]
    fn rebalanced_terms_share_magnitude() {
        let sim = short_sim();
        let w = rebalance_rewards(&sim, &[1, 2], false).unwrap();
        let rebalanced = SimConfig { reward: w, ..sim.clone() };
        let means = collect_rollouts(&rebalanced, Actor::Constant(&sim.gains.baseline_action), &[1, 2], None, false).unwrap().term_means();
        let active: Vec<f64> = means.as_array().iter().map(|v| v.abs()).filter(|&v| v > 1e-12).collect();
        let (lo, hi) = active.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo < 3.0, "{means:?}");
    }
}

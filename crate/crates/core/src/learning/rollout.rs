//! Episode collection over independently seeded, perturbed instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{mix_seed, ControllerMode, Env, FaultKind, Observation, SimConfig};
use crate::error::{Error, Result};
use crate::learning::reward::RewardTerms;
use crate::learning::teacher::TeacherSpec;
use crate::policy::{FeatureVector, Normalizer, PolicyNet, ValueNet};

/// Which observation a network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Proprioceptive and tactile features only.
    Student,
    /// Student features plus simulator ground truth.
    Privileged,
}

pub fn raw_input(env: &Env, obs: &Observation, kind: InputKind) -> Vec<f64> {
    match kind {
        InputKind::Student => obs.z.0.to_vec(),
        InputKind::Privileged => obs.privileged.to_vec(&env.world.terrain.frame),
    }
}

/// Gain-setting behaviour during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Actor<'a> {
    /// Gaussian exploration in logit space, with critic values recorded.
    Explore { net: &'a PolicyNet, value: &'a ValueNet, normalizer: &'a Normalizer, input: InputKind },
    /// Mean action.
    Deterministic { net: &'a PolicyNet, normalizer: &'a Normalizer, input: InputKind },
    Teacher(&'a TeacherSpec),
    Constant(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Student features the action was chosen on.
    pub features: FeatureVector,
    /// Normalized network input (empty for non-network actors).
    pub obs: Vec<f64>,
    pub logits: Vec<f64>,
    pub action: Vec<f64>,
    /// Scalar reward, including the fault penalty on the faulting step.
    pub reward: f64,
    pub terms: RewardTerms,
    pub value: f64,
    pub log_prob: f64,
    pub done: bool,
    pub fault: bool,
    /// Teacher action on the same state, when a labeler was given.
    pub label: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    pub transitions: Vec<Transition>,
    /// Critic value of the state after the last transition; zero after a fault.
    pub bootstrap_value: f64,
    pub fault: Option<FaultKind>,
    pub gain_violations: usize,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub episodes: Vec<Episode>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_return(&self) -> f64 {
        self.episodes.iter().map(Episode::total_reward).sum::<f64>() / self.episodes.len().max(1) as f64
    }

    /// Per-step means of the reward terms.
    pub fn term_means(&self) -> RewardTerms {
        let mut acc = RewardTerms::default();
        for t in self.episodes.iter().flat_map(|e| &e.transitions) {
            acc.add(&t.terms);
        }
        acc.scaled(1.0 / self.len().max(1) as f64)
    }

    pub fn fault_rate(&self) -> f64 {
        self.episodes.iter().filter(|e| e.fault.is_some()).count() as f64 / self.episodes.len().max(1) as f64
    }

    pub fn gain_violations(&self) -> usize {
        self.episodes.iter().map(|e| e.gain_violations).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| &e.transitions)
    }
}

/// What an actor did at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    /// Normalized network input (empty for non-network actors).
    pub input: Vec<f64>,
    pub logits: Vec<f64>,
    pub action: Vec<f64>,
    pub value: f64,
    pub log_prob: f64,
}

/// Queries `actor` on the current observation. Only exploration draws from `rng`.
pub fn choose<R: rand::Rng>(actor: Actor<'_>, env: &Env, obs: &Observation, rng: &mut R) -> Result<Choice> {
    let c = match actor {
        Actor::Explore { net, value, normalizer, input } => {
            let x = normalizer.apply(&raw_input(env, obs, input));
            let s = net.sample(&x, rng)?;
            let v = value.forward(&x)?;
            Choice { input: x, logits: s.logits, action: s.action, value: v, log_prob: s.log_prob }
        }
        Actor::Deterministic { net, normalizer, input } => {
            let x = normalizer.apply(&raw_input(env, obs, input));
            let logits = net.mean_logits(&x)?;
            let action = net.forward(&x)?;
            Choice { input: x, logits, action, value: 0.0, log_prob: 0.0 }
        }
        Actor::Teacher(spec) => Choice { input: Vec::new(), logits: Vec::new(), action: spec.act(&obs.privileged, &env.world.terrain.frame)?, value: 0.0, log_prob: 0.0 },
        Actor::Constant(a) => Choice { input: Vec::new(), logits: Vec::new(), action: a.to_vec(), value: 0.0, log_prob: 0.0 },
    };
    Ok(c)
}

/// Runs one episode; `horizon` caps the number of policy steps.
pub fn run_episode(cfg: &SimConfig, actor: Actor<'_>, seed: u64, horizon: Option<usize>) -> Result<Episode> {
    run_labeled_episode(cfg, actor, None, seed, horizon)
}

/// [`run_episode`], additionally recording what `labeler` would have done
/// at every visited state.
pub fn run_labeled_episode(cfg: &SimConfig, actor: Actor<'_>, labeler: Option<&TeacherSpec>, seed: u64, horizon: Option<usize>) -> Result<Episode> {
    let mut env = Env::new(cfg, ControllerMode::Variable, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 4));
    let mut obs = env.reset()?;
    let limit = horizon.unwrap_or(usize::MAX);
    let mut transitions = Vec::new();
    while !env.is_done() && transitions.len() < limit {
        let Choice { input, logits, action, value, log_prob } = choose(actor, &env, &obs, &mut rng)?;
        let label = labeler.map(|t| t.act(&obs.privileged, &env.world.terrain.frame)).transpose()?;
        let features = obs.z;
        let out = env.step(&action)?;
        let mut reward = out.reward.total();
        if out.fault.is_some() {
            reward -= cfg.fault.penalty;
        }
        transitions.push(Transition {
            features,
            obs: input,
            logits,
            action,
            reward,
            terms: out.reward,
            value,
            log_prob,
            done: out.done || transitions.len() + 1 == limit,
            fault: out.fault.is_some(),
            label,
        });
        obs = out.obs;
    }
    let bootstrap_value = match (env.fault(), actor) {
        (None, Actor::Explore { value, normalizer, input, .. }) => value.forward(&normalizer.apply(&raw_input(&env, &obs, input)))?,
        _ => 0.0,
    };
    Ok(Episode { seed, transitions, bootstrap_value, fault: env.fault(), gain_violations: env.gain_violations() })
}

/// Collects one episode per seed. The parallel path preserves seed order, so
/// both paths return identical batches.
pub fn collect_rollouts(cfg: &SimConfig, actor: Actor<'_>, seeds: &[u64], horizon: Option<usize>, parallel: bool) -> Result<Batch> {
    let episodes: Result<Vec<Episode>> = if parallel {
        seeds.par_iter().map(|&s| run_episode(cfg, actor, s, horizon)).collect()
    } else {
        seeds.iter().map(|&s| run_episode(cfg, actor, s, horizon)).collect()
    };
    let batch = Batch { episodes: episodes? };
    if !batch.episodes.is_empty() && batch.episodes.iter().all(|e| e.fault.is_some()) {
        let kinds: Vec<String> = batch.episodes.iter().map(|e| format!("seed {}: {} after {} steps", e.seed, e.fault.unwrap(), e.transitions.len())).collect();
        return Err(Error::Training(format!("every episode faulted ({})", kinds.join("; "))));
    }
    Ok(batch)
}

/// Labeled episodes, one per seed, in seed order.
pub fn collect_labeled(cfg: &SimConfig, actor: Actor<'_>, labeler: &TeacherSpec, seeds: &[u64], parallel: bool) -> Result<Vec<Episode>> {
    if parallel {
        seeds.par_iter().map(|&s| run_labeled_episode(cfg, actor, Some(labeler), s, None)).collect()
    } else {
        seeds.iter().map(|&s| run_labeled_episode(cfg, actor, Some(labeler), s, None)).collect()
    }
}

/// Instance seeds for one epoch of a run.
pub fn epoch_seeds(run_seed: u64, epoch: u64, instances: usize) -> Vec<u64> {
    let base = mix_seed(run_seed, 0x1000 + epoch);
    (0..instances as u64).map(|i| mix_seed(base, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{NetConfig, FEATURE_DIM};

    fn short_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.scenario.trajectory.sliding_time = 1.0;
        cfg
    }

    #[test]
    fn three_step_horizon() {
        let cfg = short_cfg();
        let a = [0.5, 0.5];
        let ep = run_episode(&cfg, Actor::Constant(&a), 7, Some(3)).unwrap();
        assert_eq!(ep.transitions.len(), 3);
        assert!(ep.transitions[2].done && !ep.transitions[1].done);
        assert_eq!(ep, run_episode(&cfg, Actor::Constant(&a), 7, Some(3)).unwrap());
    }

    #[test]
    fn full_episode_length() {
        let cfg = short_cfg();
        let ep = run_episode(&cfg, Actor::Constant(&[0.5, 0.5]), 1, None).unwrap();
        assert_eq!(ep.transitions.len(), cfg.sliding_steps());
        assert!(ep.transitions.iter().all(|t| t.reward <= 0.0));
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = short_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = PolicyNet::new(FEATURE_DIM, 2, &NetConfig::default(), &mut rng);
        let value = ValueNet::new(FEATURE_DIM, &NetConfig::default(), &mut rng);
        let norm = Normalizer::identity(FEATURE_DIM);
        let actor = Actor::Explore { net: &net, value: &value, normalizer: &norm, input: InputKind::Student };
        let seeds = epoch_seeds(3, 0, 4);
        let a = collect_rollouts(&cfg, actor, &seeds, None, false).unwrap();
        let b = collect_rollouts(&cfg, actor, &seeds, None, true).unwrap();
        assert_eq!(a, b);
        assert!(a.transitions().all(|t| t.log_prob.is_finite()));
        assert!(a.episodes.iter().all(|e| e.bootstrap_value != 0.0));
    }

    #[test]
    fn all_fault_batch_is_an_error() {
        let mut cfg = short_cfg();
        cfg.fault.max_tilt_deg = -1.0;
        let e = collect_rollouts(&cfg, Actor::Constant(&[0.5, 0.5]), &[1, 2], None, false);
        assert!(matches!(e, Err(Error::Training(_))));
    }
}

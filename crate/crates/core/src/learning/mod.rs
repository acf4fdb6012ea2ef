//! Rewards, teachers, rollouts and the optimizers that train the gain policy.

pub mod adam;
pub mod bandit;
pub mod distill;
pub mod gae;
pub mod perturb;
pub mod ppo;
pub mod reward;
pub mod rollout;
pub mod teacher;
pub mod train;

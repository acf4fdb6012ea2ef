//! Generalized advantage estimation.

use crate::learning::rollout::Batch;

/// Advantages and discounted returns for one episode. `bootstrap` is the
/// value after the final reward (zero for a terminal state).
pub fn gae_episode(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Advantages (standardized over the batch) and value targets, flattened in
/// transition order.
pub fn gae_advantages(batch: &Batch, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = Vec::with_capacity(batch.len());
    let mut ret = Vec::with_capacity(batch.len());
    for ep in &batch.episodes {
        let r: Vec<f64> = ep.transitions.iter().map(|t| t.reward).collect();
        let v: Vec<f64> = ep.transitions.iter().map(|t| t.value).collect();
        let (a, g) = gae_episode(&r, &v, ep.bootstrap_value, gamma, lambda);
        adv.extend(a);
        ret.extend(g);
    }
    normalize(&mut adv);
    (adv, ret)
}

pub fn normalize(x: &mut [f64]) {
    if x.len() < 2 {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in x.iter_mut() {
        *v = (*v - mean) / (std + 1e-8);
    }
}

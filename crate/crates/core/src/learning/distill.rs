//! Supervised imitation of a teacher by the student network.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::adam::Adam;
use crate::learning::rollout::Episode;
use crate::policy::{Normalizer, PolicyNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    /// Teacher rollouts used as training data.
    pub instances: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    /// Fraction of episodes held out for validation.
    pub holdout_fraction: f64,
    /// Extra rounds that roll out the student and relabel its states with
    /// the teacher before refitting.
    pub dagger_rounds: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { instances: 8, epochs: 200, minibatch: 256, lr: 1e-3, holdout_fraction: 0.25, dagger_rounds: 1 }
    }
}

/// Pairs of raw student input and teacher action, grouped by episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// Episode index of every sample.
    pub episode: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, input: Vec<f64>, target: Vec<f64>, episode: usize) {
        self.inputs.push(input);
        self.targets.push(target);
        self.episode.push(episode);
    }

    /// Adds every labeled transition; episode ids continue after the current ones.
    pub fn extend_from_episodes(&mut self, episodes: &[Episode]) {
        let base = self.episode.iter().max().map_or(0, |m| m + 1);
        for (k, ep) in episodes.iter().enumerate() {
            for t in &ep.transitions {
                if let Some(label) = &t.label {
                    self.push(t.features.0.to_vec(), label.clone(), base + k);
                }
            }
        }
    }

    /// Splits by whole episodes: the last `fraction` of episode ids are held out.
    pub fn split(&self, fraction: f64) -> (Dataset, Dataset) {
        let n_ep = self.episode.iter().max().map_or(0, |m| m + 1);
        let held = ((n_ep as f64 * fraction).round() as usize).min(n_ep.saturating_sub(1));
        let cut = n_ep - held;
        let (mut a, mut b) = (Dataset::default(), Dataset::default());
        for i in 0..self.len() {
            let dst = if self.episode[i] < cut { &mut a } else { &mut b };
            dst.push(self.inputs[i].clone(), self.targets[i].clone(), self.episode[i]);
        }
        (a, b)
    }

    /// Running statistics over all inputs, frozen.
    pub fn normalizer(&self) -> Normalizer {
        let mut n = Normalizer::new(self.inputs.first().map_or(0, Vec::len));
        for x in &self.inputs {
            n.update(x);
        }
        n.freeze();
        n
    }
}

/// Mean squared action error in action units, averaged over samples and components.
pub fn mse(net: &PolicyNet, normalizer: &Normalizer, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        let a = net.forward(&normalizer.apply(x))?;
        acc += a.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
        count += y.len();
    }
    Ok(acc / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub train_mse: f64,
    pub heldout_mse: f64,
    pub samples: usize,
}

/// Minibatch Adam on the action MSE, step size decaying linearly to 5% of
/// `cfg.lr` over the epochs.
pub fn fit<R: Rng>(net: &mut PolicyNet, normalizer: &Normalizer, train: &Dataset, cfg: &DistillConfig, rng: &mut R) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    let inputs: Vec<Vec<f64>> = train.inputs.iter().map(|x| normalizer.apply(x)).collect();
    let mut opt = Adam::new(net.param_count(), cfg.lr);
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let n_mlp = net.mlp.params.len();
    for epoch in 0..cfg.epochs {
        opt.lr = cfg.lr * (1.0 - 0.95 * epoch as f64 / cfg.epochs as f64);
        idx.shuffle(rng);
        for chunk in idx.chunks(cfg.minibatch) {
            let scale = 2.0 / (chunk.len() * net.action_output_dim()) as f64;
            let mut grad = vec![0.0; net.param_count()];
            for &i in chunk {
                let a = net.forward(&inputs[i])?;
                let up: Vec<f64> = a.iter().zip(&train.targets[i]).map(|(p, t)| scale * (p - t)).collect();
                let g = net.backward(&inputs[i], &up)?;
                grad[..n_mlp].iter_mut().zip(&g[..n_mlp]).for_each(|(acc, v)| *acc += v);
            }
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::Divergent);
            }
            let mut p = net.flat_params();
            opt.step(&mut p, &grad);
            net.set_flat_params(&p)?;
        }
    }
    mse(net, normalizer, train)
}

/// Fits the student on `data`, reporting train and held-out error.
pub fn distill_student<R: Rng>(net: &mut PolicyNet, normalizer: &Normalizer, data: &Dataset, cfg: &DistillConfig, rng: &mut R) -> Result<DistillReport> {
    let (train, held) = data.split(cfg.holdout_fraction);
    let train_mse = fit(net, normalizer, &train, cfg, rng)?;
    let heldout_mse = if held.is_empty() { train_mse } else { mse(net, normalizer, &held)? };
    Ok(DistillReport { train_mse, heldout_mse, samples: data.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(rng: &mut ChaCha8Rng) -> PolicyNet {
        PolicyNet::new(3, 2, &NetConfig { hidden: vec![16, 16], ..Default::default() }, rng)
    }

    #[test]
    fn constant_teacher_is_learned_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut data = Dataset::default();
        for i in 0..1000 {
            let x = vec![(i as f64 * 0.3).sin(), (i as f64 * 0.11).cos(), (i as f64 * 0.07).sin()];
            data.push(x, vec![0.3, 0.85], i / 100);
        }
        let mut net = small_net(&mut rng);
        let norm = data.normalizer();
        let cfg = DistillConfig { epochs: 400, minibatch: 64, lr: 3e-3, ..Default::default() };
        let r = distill_student(&mut net, &norm, &data, &cfg, &mut rng).unwrap();
        assert!(r.train_mse < 1e-6, "{r:?}");
        assert!(r.heldout_mse < 1e-6, "{r:?}");
    }

    #[test]
    fn single_pair_overfits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut data = Dataset::default();
        data.push(vec![0.2, -1.0, 3.0], vec![0.9, 0.1], 0);
        let mut net = small_net(&mut rng);
        let norm = Normalizer::identity(3);
        let cfg = DistillConfig { epochs: 3000, minibatch: 1, lr: 3e-3, ..Default::default() };
        assert!(fit(&mut net, &norm, &data, &cfg, &mut rng).unwrap() < 1e-6);
    }

    #[test]
    fn split_keeps_episodes_whole() {
        let mut data = Dataset::default();
        for i in 0..40 {
            data.push(vec![i as f64], vec![0.5], i / 10);
        }
        let (a, b) = data.split(0.25);
        assert_eq!((a.len(), b.len()), (30, 10));
        assert!(b.episode.iter().all(|&e| e == 3));
    }
}

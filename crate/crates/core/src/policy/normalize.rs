use serde::{Deserialize, Serialize};

/// Per-component standardization from running mean and variance.
///
/// Statistics accumulate until [`Normalizer::freeze`]; after that `update`
/// is a no-op so deployment and checkpoints see fixed statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Sum of squared deviations (Welford's M2).
    pub m2: Vec<f64>,
    pub count: u64,
    pub frozen: bool,
    /// Standardized values are clipped to ±`clip`.
    pub clip: f64,
}

const MIN_STD: f64 = 1e-6;

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0, frozen: false, clip: 10.0 }
    }

    /// Pass-through statistics.
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], m2: vec![1.0; dim], count: 2, frozen: true, clip: f64::MAX }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn std(&self) -> Vec<f64> {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        self.m2.iter().map(|s| (s / denom).sqrt().max(MIN_STD)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let std = self.std();
        x.iter().zip(&self.mean).zip(&std).map(|((v, m), s)| ((v - m) / s).clamp(-self.clip, self.clip)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_two_pass_statistics() {
        let data: Vec<[f64; 2]> = (0..100).map(|i| [i as f64 * 0.5, (i as f64).sin() * 3.0 + 1.0]).collect();
        let mut n = Normalizer::new(2);
        for d in &data {
            n.update(d);
        }
        for k in 0..2 {
            let mean = data.iter().map(|d| d[k]).sum::<f64>() / 100.0;
            let var = data.iter().map(|d| (d[k] - mean).powi(2)).sum::<f64>() / 99.0;
            assert!((n.mean[k] - mean).abs() < 1e-12);
            assert!((n.std()[k] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_ignores_updates() {
        let mut n = Normalizer::new(1);
        n.update(&[1.0]);
        n.update(&[3.0]);
        n.freeze();
        let before = n.clone();
        n.update(&[100.0]);
        assert_eq!(n, before);
        assert_eq!(n.apply(&[2.0]), vec![0.0]);
    }

    #[test]
    fn identity_passes_through() {
        let n = Normalizer::identity(3);
        assert_eq!(n.apply(&[1.5, -2.0, 7.0]), vec![1.5, -2.0, 7.0]);
    }
}

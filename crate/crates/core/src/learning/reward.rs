use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub l_e_r: f64,
    pub l_p: f64,
    pub l_d: f64,
    pub l_omega: f64,
    pub l_a: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { l_e_r: 10.0, l_p: 10.0, l_d: 100.0, l_omega: 0.1, l_a: 1.0 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|&w| w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParams("reward weights must be finite and >= 0".into()))
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.l_e_r, self.l_p, self.l_d, self.l_omega, self.l_a]
    }

    pub fn from_array(w: [f64; 5]) -> Self {
        Self { l_e_r: w[0], l_p: w[1], l_d: w[2], l_omega: w[3], l_a: w[4] }
    }

    /// Rescales weights so every term with a nonzero mean magnitude ends up at
    /// the geometric mean of those magnitudes. Terms that were identically
    /// zero (e.g. action smoothness under a constant action) keep their weight.
    pub fn rebalanced(&self, term_means: &RewardTerms) -> RewardWeights {
        let w = self.as_array();
        let m = term_means.as_array().map(f64::abs);
        let active: Vec<f64> = m.iter().copied().filter(|&v| v > 1e-12).collect();
        if active.is_empty() {
            return self.clone();
        }
        let target = (active.iter().map(|v| v.ln()).sum::<f64>() / active.len() as f64).exp();
        let mut out = w;
        for i in 0..5 {
            if m[i] > 1e-12 {
                out[i] = w[i] * target / m[i];
            }
        }
        RewardWeights::from_array(out)
    }
}

/// Weighted reward terms, each ≤ 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub attitude: f64,
    pub position: f64,
    pub separation: f64,
    pub angular_rate: f64,
    pub smoothness: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.attitude + self.position + self.separation + self.angular_rate + self.smoothness
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.attitude, self.position, self.separation, self.angular_rate, self.smoothness]
    }

    pub fn scaled(&self, c: f64) -> RewardTerms {
        let a = self.as_array().map(|v| v * c);
        RewardTerms { attitude: a[0], position: a[1], separation: a[2], angular_rate: a[3], smoothness: a[4] }
    }

    pub fn add(&mut self, o: &RewardTerms) {
        self.attitude += o.attitude;
        self.position += o.position;
        self.separation += o.separation;
        self.angular_rate += o.angular_rate;
        self.smoothness += o.smoothness;
    }

    pub const NAMES: [&'static str; 5] = ["attitude", "position", "separation", "angular_rate", "smoothness"];
}

/// `‖a/‖a‖ − a_prev/‖a_prev‖‖²`; a vector shorter than 1e-6 takes the other's
/// direction so the term vanishes.
pub fn smoothness_penalty(a: &[f64], a_prev: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let np = a_prev.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < 1e-6 || np < 1e-6 {
        return 0.0;
    }
    a.iter().zip(a_prev).map(|(x, y)| (x / na - y / np).powi(2)).sum()
}

/// Per-term negative reward.
///
/// `separation` is the tip distance above the surface along the contact
/// normal; it is zero while in contact.
pub fn compute_reward(
    e_r: &Vector3<f64>,
    e_p: &Vector3<f64>,
    separation: f64,
    omega: &Vector3<f64>,
    a: &[f64],
    a_prev: &[f64],
    w: &RewardWeights,
) -> RewardTerms {
    RewardTerms {
        attitude: -w.l_e_r * e_r.norm_squared(),
        position: -w.l_p * e_p.norm_squared(),
        separation: -w.l_d * separation.max(0.0).powi(2),
        angular_rate: -w.l_omega * omega.norm_squared(),
        smoothness: -w.l_a * smoothness_penalty(a, a_prev),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_tracking_is_zero() {
        let z = Vector3::zeros();
        let r = compute_reward(&z, &z, 0.0, &z, &[0.4, 0.6], &[0.4, 0.6], &RewardWeights::default());
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn pitch_error_only() {
        let z = Vector3::zeros();
        let r = compute_reward(&Vector3::new(0.0, 0.1, 0.0), &z, 0.0, &z, &[0.5], &[0.5], &RewardWeights::default());
        assert!((r.total() + 0.1).abs() < 1e-15);
    }

    #[test]
    fn parallel_actions_are_smooth() {
        assert_eq!(smoothness_penalty(&[0.2, 0.4], &[0.1, 0.2]), 0.0);
        assert_eq!(smoothness_penalty(&[0.0, 0.0], &[0.1, 0.2]), 0.0);
        assert!((smoothness_penalty(&[1.0, 0.0], &[0.0, 1.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rebalance_equalizes_active_terms() {
        let w = RewardWeights::default();
        let means = RewardTerms { attitude: -0.04, position: -0.4, separation: 0.0, angular_rate: -0.001, smoothness: 0.0 };
        let nw = w.rebalanced(&means);
        let scaled = [means.attitude * nw.l_e_r / w.l_e_r, means.position * nw.l_p / w.l_p, means.angular_rate * nw.l_omega / w.l_omega];
        for s in scaled {
            assert!((s - scaled[0]).abs() < 1e-12);
        }
        assert_eq!(nw.l_d, w.l_d);
        assert_eq!(nw.l_a, w.l_a);
    }

    proptest! {
        #[test]
        fn every_term_non_positive(
            er in proptest::array::uniform3(-1.0f64..1.0),
            ep in proptest::array::uniform3(-1.0f64..1.0),
            om in proptest::array::uniform3(-5.0f64..5.0),
            d in -0.1f64..0.5,
            a in proptest::array::uniform2(0.001f64..0.999),
            b in proptest::array::uniform2(0.001f64..0.999),
        ) {
            let r = compute_reward(&Vector3::from(er), &Vector3::from(ep), d, &Vector3::from(om), &a, &b, &RewardWeights::default());
            for t in r.as_array() {
                prop_assert!(t <= 0.0);
            }
        }
    }
}

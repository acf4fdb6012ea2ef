use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Normalizer, PolicyNet, PrivilegedFeatures};
use crate::terrain::SurfaceFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    Handcrafted,
    LearnedPrivileged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HandcraftedParams {
    pub mu_lo: f64,
    pub mu_hi: f64,
    /// Angular action at `mu_lo` and at `mu_hi`.
    pub angular_range: (f64, f64),
    /// Translational action range; the maximum is used at `mu_lo`.
    pub translational_range: (f64, f64),
    /// Probe height spread (m) above which the surface counts as a discontinuity.
    pub height_threshold: f64,
    /// Fraction of the way both actions move toward their compliant minimum there.
    pub compliant_blend: f64,
}

impl Default for HandcraftedParams {
    fn default() -> Self {
        Self {
            mu_lo: 0.05,
            mu_hi: 0.62,
            angular_range: (0.3, 0.95),
            translational_range: (0.05, 0.9),
            height_threshold: 0.005,
            compliant_blend: 0.7,
        }
    }
}

/// A learned teacher over the flattened privileged features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedTeacher {
    pub net: PolicyNet,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub kind: TeacherKind,
    pub handcrafted: HandcraftedParams,
    pub learned: Option<LearnedTeacher>,
    /// Gain axes the action refers to, in action order.
    pub adapted_axes: Vec<usize>,
}

impl TeacherSpec {
    pub fn handcrafted(params: HandcraftedParams, adapted_axes: Vec<usize>) -> Self {
        Self { kind: TeacherKind::Handcrafted, handcrafted: params, learned: None, adapted_axes }
    }

    pub fn act(&self, priv_: &PrivilegedFeatures, frame: &SurfaceFrame) -> Result<Vec<f64>> {
        match self.kind {
            TeacherKind::Handcrafted => Ok(handcrafted_teacher(priv_, &self.handcrafted, &self.adapted_axes)),
            TeacherKind::LearnedPrivileged => {
                let t = self.learned.as_ref().ok_or_else(|| Error::Config("learned teacher has no network".into()))?;
                t.net.forward(&t.normalizer.apply(&priv_.to_vec(frame)))
            }
        }
    }
}

/// Friction-scheduled gains: stiffer attitude and softer normal translation as
/// μ grows, both pulled toward compliance near height discontinuities. Axes
/// 0..3 are translational, 3..6 rotational.
pub fn handcrafted_teacher(priv_: &PrivilegedFeatures, p: &HandcraftedParams, adapted_axes: &[usize]) -> Vec<f64> {
    let u = ((priv_.mu_filtered - p.mu_lo) / (p.mu_hi - p.mu_lo)).clamp(0.0, 1.0);
    let (a_lo, a_hi) = p.angular_range;
    let (t_lo, t_hi) = p.translational_range;
    let mut angular = a_lo + (a_hi - a_lo) * u;
    let mut translational = t_hi - (t_hi - t_lo) * u;
    if priv_.height_spread() > p.height_threshold {
        angular += p.compliant_blend * (a_lo - angular);
        translational += p.compliant_blend * (t_lo - translational);
    }
    adapted_axes.iter().map(|&ax| if ax < 3 { translational } else { angular }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::FeatureVector;
    use nalgebra::Vector3;

    fn priv_with(mu: f64, heights: Vec<f64>) -> PrivilegedFeatures {
        let n = heights.len();
        PrivilegedFeatures { z: FeatureVector([0.0; 6]), mu_contact: mu, mu_filtered: mu, local_normals: vec![-Vector3::x(); n], local_heights: heights }
    }

    const AXES: [usize; 2] = [0, 4];

    #[test]
    fn endpoints_and_midpoint() {
        let p = HandcraftedParams::default();
        let close = |a: Vec<f64>, b: [f64; 2]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(handcrafted_teacher(&priv_with(p.mu_lo, vec![0.0; 5]), &p, &AXES), [0.9, 0.3]));
        assert!(close(handcrafted_teacher(&priv_with(p.mu_hi, vec![0.0; 5]), &p, &AXES), [0.05, 0.95]));
        let mid = handcrafted_teacher(&priv_with(0.5 * (p.mu_lo + p.mu_hi), vec![0.0; 5]), &p, &AXES);
        assert!((mid[0] - 0.475).abs() < 1e-12);
        assert!((mid[1] - 0.625).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_mu() {
        let p = HandcraftedParams::default();
        let mut prev = handcrafted_teacher(&priv_with(0.0, vec![]), &p, &AXES);
        for k in 1..=100 {
            let a = handcrafted_teacher(&priv_with(k as f64 * 0.01, vec![]), &p, &AXES);
            assert!(a[0] <= prev[0] && a[1] >= prev[1]);
            prev = a;
        }
    }

    #[test]
    fn discontinuity_pulls_toward_compliance() {
        let p = HandcraftedParams::default();
        let flat = handcrafted_teacher(&priv_with(0.3, vec![0.0; 5]), &p, &AXES);
        let step = handcrafted_teacher(&priv_with(0.3, vec![0.0, 0.0, 0.02, 0.02, 0.02]), &p, &AXES);
        assert!(step[0] < flat[0] && step[1] < flat[1]);
        assert!(step[0] >= p.translational_range.0 && step[1] >= p.angular_range.0);
    }

    #[test]
    fn learned_without_net_is_config_error() {
        let spec = TeacherSpec { kind: TeacherKind::LearnedPrivileged, handcrafted: HandcraftedParams::default(), learned: None, adapted_axes: AXES.to_vec() };
        assert!(spec.act(&priv_with(0.3, vec![]), &SurfaceFrame::default()).is_err());
    }
}

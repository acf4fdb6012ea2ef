//! Policy inputs built from the state estimate and the wrench sensor.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::control::LowPass;
use crate::dynamics::{Frame, RobotState, Wrench};
use crate::error::{Error, Result};
use crate::terrain::{SurfaceFrame, Terrain};

pub const FEATURE_DIM: usize = 6;

/// `[pitch rate (filtered), pitch error, position error along slide,
/// velocity along slide, friction force (filtered), normal force (filtered)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn pitch_rate(&self) -> f64 {
        self.0[0]
    }
    pub fn pitch_error(&self) -> f64 {
        self.0[1]
    }
    pub fn position_error(&self) -> f64 {
        self.0[2]
    }
    pub fn velocity(&self) -> f64 {
        self.0[3]
    }
    pub fn friction_force(&self) -> f64 {
        self.0[4]
    }
    pub fn normal_force(&self) -> f64 {
        self.0[5]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub pitch_rate_hz: f64,
    pub force_hz: f64,
    /// Arclength offsets (m) of the privileged height/normal probes around the tip.
    pub probe_offsets: Vec<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { pitch_rate_hz: 5.0, force_hz: 5.0, probe_offsets: vec![-0.04, -0.02, 0.0, 0.02, 0.04] }
    }
}

/// Filter state for one episode, stepped at the control rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFilters {
    pub pitch_rate: LowPass,
    /// Friction and normal force.
    pub force: LowPass,
    /// Ground-truth friction coefficient under the tip through the force
    /// filter, for the teacher; stepped by the caller.
    pub mu: LowPass,
}

impl FeatureFilters {
    pub fn new(cfg: &FeatureConfig, dt: f64) -> Self {
        Self {
            pitch_rate: LowPass::from_cutoff(cfg.pitch_rate_hz, dt, vec![0.0]),
            force: LowPass::from_cutoff(cfg.force_hz, dt, vec![0.0; 2]),
            mu: LowPass::from_cutoff(cfg.force_hz, dt, vec![0.0]),
        }
    }
}

/// Assembles the feature vector; `errors` are the tracking errors of the
/// estimated state and `wrench_meas` the body-frame sensor reading.
pub fn build_features(
    state: &RobotState,
    errors: &(Vector6<f64>, Vector6<f64>),
    wrench_meas: &Wrench,
    filters: &mut FeatureFilters,
    frame: &SurfaceFrame,
) -> Result<FeatureVector> {
    if wrench_meas.frame != Frame::Body {
        return Err(Error::FrameMismatch { expected: Frame::Body, got: wrench_meas.frame });
    }
    let (e_s, _) = errors;
    let t = frame.slide;
    let f_world = state.orientation * wrench_meas.force;
    let pitch_rate = filters.pitch_rate.step(&[state.ang_vel.y])[0];
    let forces = filters.force.step(&[-f_world.dot(&t), f_world.dot(&frame.normal)]);
    let e_p = Vector3::new(e_s[0], e_s[1], e_s[2]);
    Ok(FeatureVector([pitch_rate, e_s[4], e_p.dot(&t), state.lin_vel.dot(&t), forces[0], forces[1]]))
}

/// Features only a simulator can provide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivilegedFeatures {
    pub z: FeatureVector,
    /// Friction coefficient under the tip.
    pub mu_contact: f64,
    /// `mu_contact` through the force-channel filter.
    pub mu_filtered: f64,
    pub local_normals: Vec<Vector3<f64>>,
    pub local_heights: Vec<f64>,
}

impl PrivilegedFeatures {
    pub fn dim(probes: usize) -> usize {
        FEATURE_DIM + 1 + probes * 4
    }

    /// Flat input for a learned privileged teacher: `z`, filtered μ, heights,
    /// then normals expressed in the surface frame `(slide, lateral, normal)`.
    pub fn to_vec(&self, frame: &SurfaceFrame) -> Vec<f64> {
        let mut v = self.z.0.to_vec();
        v.push(self.mu_filtered);
        v.extend(&self.local_heights);
        for n in &self.local_normals {
            v.extend([n.dot(&frame.slide), n.dot(&frame.lateral()), n.dot(&frame.normal)]);
        }
        v
    }

    /// Largest height difference among the probes.
    pub fn height_spread(&self) -> f64 {
        let (lo, hi) = self.local_heights.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| (lo.min(h), hi.max(h)));
        if self.local_heights.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// Probes the true surface around arclength `s` (lateral offset `b`).
/// Probes outside the terrain read the nominal plane.
pub fn privileged_features(z: FeatureVector, terrain: &Terrain, s: f64, b: f64, cfg: &FeatureConfig, mu_filtered: f64) -> PrivilegedFeatures {
    let mu_contact = terrain.query_surface_at(s, b).map_or(0.0, |q| q.mu);
    let (mut heights, mut normals) = (Vec::with_capacity(cfg.probe_offsets.len()), Vec::with_capacity(cfg.probe_offsets.len()));
    for &ds in &cfg.probe_offsets {
        match terrain.query_surface_at(s + ds, b) {
            Ok(q) => {
                heights.push(q.height);
                normals.push(q.normal);
            }
            Err(_) => {
                heights.push(0.0);
                normals.push(terrain.frame.normal);
            }
        }
    }
    PrivilegedFeatures { z, mu_contact, mu_filtered, local_normals: normals, local_heights: heights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{tracking_errors, Reference};
    use nalgebra::UnitQuaternion;

    fn filters() -> FeatureFilters {
        FeatureFilters::new(&FeatureConfig::default(), 0.01)
    }

    #[test]
    fn hover_without_contact_is_zero() {
        let s = RobotState::at_rest(Vector3::new(-0.5, 0.0, 1.0), UnitQuaternion::identity());
        let r = Reference::hold(s.position, s.orientation);
        let z = build_features(&s, &tracking_errors(&s, &r), &Wrench::zero(Frame::Body), &mut filters(), &SurfaceFrame::default()).unwrap();
        assert_eq!(z.0, [0.0; 6]);
    }

    #[test]
    fn position_error_along_slide() {
        let r = Reference::hold(Vector3::new(-0.5, 0.0, 1.0), UnitQuaternion::identity());
        let s = RobotState::at_rest(r.pos_ref + Vector3::new(0.0, 0.0, 0.07), r.att_ref);
        let z = build_features(&s, &tracking_errors(&s, &r), &Wrench::zero(Frame::Body), &mut filters(), &SurfaceFrame::default()).unwrap();
        assert!((z.position_error() - 0.07).abs() < 1e-15);
        assert_eq!(z.velocity(), 0.0);
    }

    #[test]
    fn friction_force_converges() {
        // tip pressed with F_n = 7 N on mu = 0.5 while sliding up: the sensor sees
        // +7 N along the outward normal (-x) and 3.5 N of friction pointing down.
        let s = RobotState::at_rest(Vector3::new(-0.4, 0.0, 1.0), UnitQuaternion::identity());
        let w = Wrench::new(Vector3::new(-7.0, 0.0, -3.5), Vector3::zeros(), Frame::Body);
        let r = Reference::hold(s.position, s.orientation);
        let mut f = filters();
        let mut z = FeatureVector([0.0; 6]);
        for _ in 0..500 {
            z = build_features(&s, &tracking_errors(&s, &r), &w, &mut f, &SurfaceFrame::default()).unwrap();
        }
        assert!((z.friction_force() - 3.5).abs() < 1e-9);
        assert!((z.normal_force() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn world_frame_wrench_rejected() {
        let s = RobotState::at_rest(Vector3::zeros(), UnitQuaternion::identity());
        let r = Reference::hold(s.position, s.orientation);
        let e = build_features(&s, &tracking_errors(&s, &r), &Wrench::zero(Frame::World), &mut filters(), &SurfaceFrame::default());
        assert!(matches!(e, Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn privileged_probes_see_step() {
        let t = crate::scenarios::make_step_terrain(0.02, 1.5, -0.5, 4.0, (0.2, 0.6), SurfaceFrame::default()).unwrap();
        let cfg = FeatureConfig::default();
        let far = privileged_features(FeatureVector([0.0; 6]), &t, 1.0, 0.0, &cfg, 0.2);
        assert_eq!(far.height_spread(), 0.0);
        assert_eq!(far.mu_contact, 0.2);
        let near = privileged_features(FeatureVector([0.0; 6]), &t, 1.49, 0.0, &cfg, 0.2);
        assert!((near.height_spread() - 0.02).abs() < 1e-15);
        assert_eq!(near.to_vec(&t.frame).len(), PrivilegedFeatures::dim(cfg.probe_offsets.len()));
    }
}

//! Measurement channel: force-torque sensor and pose/velocity estimate.

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Frame, RobotState, Wrench};
use crate::error::{Error, Result};
use crate::terrain::ContactResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// White noise on the measured wrench, `[f; τ]` in the body frame.
    pub wrench_noise_std: Vector6<f64>,
    /// Bias random-walk intensity per √s.
    pub wrench_bias_walk_std: Vector6<f64>,
    pub position_std: f64,
    /// Small-angle attitude noise (rad).
    pub attitude_std: f64,
    pub lin_vel_std: f64,
    pub ang_vel_std: f64,
    pub wrench_noise: bool,
    pub wrench_bias: bool,
    pub state_noise: bool,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            wrench_noise_std: Vector6::zeros(),
            wrench_bias_walk_std: Vector6::zeros(),
            position_std: 0.0,
            attitude_std: 0.0,
            lin_vel_std: 0.0,
            ang_vel_std: 0.0,
            wrench_noise: true,
            wrench_bias: true,
            state_noise: true,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.position_std, self.attitude_std, self.lin_vel_std, self.ang_vel_std];
        let ok = self.wrench_noise_std.iter().chain(self.wrench_bias_walk_std.iter()).chain(scalars.iter()).all(|&v| v >= 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams("sensor standard deviations must be finite and >= 0".into()))
        }
    }

    /// True when no channel can perturb a measurement.
    pub fn is_noiseless(&self) -> bool {
        let w = !self.wrench_noise || self.wrench_noise_std.iter().all(|&v| v == 0.0);
        let b = !self.wrench_bias || self.wrench_bias_walk_std.iter().all(|&v| v == 0.0);
        let s = !self.state_noise || [self.position_std, self.attitude_std, self.lin_vel_std, self.ang_vel_std].iter().all(|&v| v == 0.0);
        w && b && s
    }
}

fn gaussian3<R: Rng>(rng: &mut R, std: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| std * rng.sample::<f64, _>(StandardNormal))
}

/// Per-instance sensor state: the model plus the accumulated wrench bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensors {
    pub model: SensorModel,
    pub bias: Vector6<f64>,
}

impl Sensors {
    pub fn new(model: SensorModel) -> Self {
        Self { model, bias: Vector6::zeros() }
    }

    /// Body-frame contact wrench plus white noise and a random-walk bias
    /// advanced by `dt`. Never draws from `rng` for disabled channels.
    pub fn measure_wrench<R: Rng>(&mut self, contact: &ContactResult, dt: f64, rng: &mut R) -> Wrench {
        let truth = &contact.wrench_body;
        debug_assert_eq!(truth.frame, Frame::Body);
        let mut out = Vector6::new(truth.force.x, truth.force.y, truth.force.z, truth.torque.x, truth.torque.y, truth.torque.z);
        let m = &self.model;
        if m.wrench_bias && m.wrench_bias_walk_std.iter().any(|&v| v != 0.0) {
            let sq = dt.sqrt();
            for i in 0..6 {
                self.bias[i] += m.wrench_bias_walk_std[i] * sq * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if m.wrench_bias {
            out += self.bias;
        }
        if m.wrench_noise && m.wrench_noise_std.iter().any(|&v| v != 0.0) {
            for i in 0..6 {
                out[i] += m.wrench_noise_std[i] * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Wrench::new(Vector3::new(out[0], out[1], out[2]), Vector3::new(out[3], out[4], out[5]), Frame::Body)
    }

    /// Additive Gaussian state estimate; attitude is perturbed through a
    /// small-angle exponential and renormalized.
    pub fn measure_state<R: Rng>(&self, truth: &RobotState, rng: &mut R) -> RobotState {
        let m = &self.model;
        if !m.state_noise {
            return truth.clone();
        }
        let mut est = truth.clone();
        if m.position_std != 0.0 {
            est.position += gaussian3(rng, m.position_std);
        }
        if m.attitude_std != 0.0 {
            let d = gaussian3(rng, m.attitude_std);
            est.orientation = UnitQuaternion::new_normalize((truth.orientation * UnitQuaternion::from_scaled_axis(d)).into_inner());
        }
        if m.lin_vel_std != 0.0 {
            est.lin_vel += gaussian3(rng, m.lin_vel_std);
        }
        if m.ang_vel_std != 0.0 {
            est.ang_vel += gaussian3(rng, m.ang_vel_std);
        }
        est
    }
}

//! Single rigid-body flight dynamics with a saturated, delayed wrench actuator.
//!
//! Translational states live in the world frame and rotational states in the
//! body frame, so the mass matrix is `blockdiag(m I3, I)` and the Coriolis
//! term reduces to the gyroscopic torque `ω × Iω`.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BodyParams {
    /// Total mass (kg).
    pub mass: f64,
    /// Inertia about the center of mass, body frame (kg m^2).
    pub inertia: Matrix3<f64>,
    /// Center-of-mass offset from the geometric reference, body frame (m).
    pub r_com: Vector3<f64>,
    /// End-effector tip offset from the geometric reference, body frame (m).
    pub r_end: Vector3<f64>,
    pub gravity: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self {
            mass: 4.5,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.15, 0.125, 0.225)),
            r_com: Vector3::zeros(),
            r_end: Vector3::new(0.45, 0.0, 0.0),
            gravity: STANDARD_GRAVITY,
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidParams(format!("mass must be positive, got {}", self.mass)));
        }
        let asym = (self.inertia - self.inertia.transpose()).abs().max();
        if asym >= 1e-12 {
            return Err(Error::InvalidParams(format!("inertia is not symmetric (max asymmetry {asym:e})")));
        }
        let eig = SymmetricEigen::new(self.inertia).eigenvalues;
        if eig.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidParams("inertia is not positive definite".into()));
        }
        if !(self.lever_arm().norm() > 0.0) {
            return Err(Error::InvalidParams("end effector coincides with center of mass".into()));
        }
        Ok(())
    }

    /// Tip position relative to the center of mass, body frame.
    pub fn lever_arm(&self) -> Vector3<f64> {
        self.r_end - self.r_com
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }
}

/// Pose and velocities of the body. `position` and `lin_vel` refer to the
/// center of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub position: Vector3<f64>,
    /// World-from-body rotation.
    pub orientation: UnitQuaternion<f64>,
    pub lin_vel: Vector3<f64>,
    /// Body rates, body frame.
    pub ang_vel: Vector3<f64>,
}

impl RobotState {
    pub fn at_rest(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation, lin_vel: Vector3::zeros(), ang_vel: Vector3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.lin_vel.iter().all(|v| v.is_finite())
            && self.ang_vel.iter().all(|v| v.is_finite())
    }

    /// World position of the end-effector tip.
    pub fn tip_position(&self, params: &BodyParams) -> Vector3<f64> {
        self.position + self.orientation * params.lever_arm()
    }

    /// World velocity of the end-effector tip.
    pub fn tip_velocity(&self, params: &BodyParams) -> Vector3<f64> {
        self.lin_vel + self.orientation * self.ang_vel.cross(&params.lever_arm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    World,
    Body,
}

/// Stacked force and torque, both expressed in `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: Frame,
}

impl Wrench {
    pub fn zero(frame: Frame) -> Self {
        Self { force: Vector3::zeros(), torque: Vector3::zeros(), frame }
    }

    pub fn new(force: Vector3<f64>, torque: Vector3<f64>, frame: Frame) -> Self {
        Self { force, torque, frame }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }

    /// Re-expresses the wrench in `frame` given the world-from-body rotation.
    pub fn expressed_in(&self, frame: Frame, attitude: &UnitQuaternion<f64>) -> Wrench {
        match (self.frame, frame) {
            (a, b) if a == b => *self,
            (Frame::Body, Frame::World) => {
                Wrench::new(attitude * self.force, attitude * self.torque, Frame::World)
            }
            _ => Wrench::new(
                attitude.inverse_transform_vector(&self.force),
                attitude.inverse_transform_vector(&self.torque),
                Frame::Body,
            ),
        }
    }

    /// Force in the world frame, torque in the body frame.
    fn dynamics_components(&self, attitude: &UnitQuaternion<f64>) -> (Vector3<f64>, Vector3<f64>) {
        match self.frame {
            Frame::World => (self.force, attitude.inverse_transform_vector(&self.torque)),
            Frame::Body => (attitude * self.force, self.torque),
        }
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;

    fn add(self, rhs: Wrench) -> Wrench {
        assert_eq!(self.frame, rhs.frame, "wrench frame mismatch");
        Wrench::new(self.force + rhs.force, self.torque + rhs.torque, self.frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuatorConfig {
    pub force_limit: Vector3<f64>,
    pub torque_limit: Vector3<f64>,
    pub delay_steps: usize,
    pub saturation: bool,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        let hover = BodyParams::default().weight();
        Self {
            force_limit: Vector3::new(20.0, 20.0, 20.0 + hover),
            torque_limit: Vector3::new(5.0, 5.0, 5.0),
            delay_steps: 8,
            saturation: true,
        }
    }
}

/// Collective actuator process: per-axis body-frame saturation followed by a
/// fixed transport delay counted in physics steps.
#[derive(Debug, Clone)]
pub struct ActuatorModel {
    pub force_limit: Vector3<f64>,
    pub torque_limit: Vector3<f64>,
    pub saturation: bool,
    buffer: VecDeque<Wrench>,
    delay_steps: usize,
}

impl ActuatorModel {
    pub fn new(config: &ActuatorConfig) -> Self {
        let buffer = std::iter::repeat(Wrench::zero(Frame::Body)).take(config.delay_steps).collect();
        Self {
            force_limit: config.force_limit,
            torque_limit: config.torque_limit,
            saturation: config.saturation,
            buffer,
            delay_steps: config.delay_steps,
        }
    }

    /// Pre-fills the delay line with `wrench` (e.g. hover thrust at spawn).
    pub fn prefill(&mut self, wrench: Wrench) {
        let w = self.saturate(&wrench);
        self.buffer.iter_mut().for_each(|slot| *slot = w);
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn saturate(&self, w: &Wrench) -> Wrench {
        if !self.saturation {
            return *w;
        }
        let clamp = |v: &Vector3<f64>, lim: &Vector3<f64>| {
            Vector3::from_fn(|i, _| v[i].clamp(-lim[i], lim[i]))
        };
        Wrench::new(clamp(&w.force, &self.force_limit), clamp(&w.torque, &self.torque_limit), w.frame)
    }

    /// Saturates and enqueues `command`, returning the wrench enqueued
    /// `delay_steps` calls earlier.
    pub fn apply_actuation(&mut self, command: &Wrench) -> Result<Wrench> {
        if command.frame != Frame::Body {
            return Err(Error::FrameMismatch { expected: Frame::Body, got: command.frame });
        }
        let sat = self.saturate(command);
        if self.delay_steps == 0 {
            return Ok(sat);
        }
        self.buffer.push_back(sat);
        Ok(self.buffer.pop_front().expect("delay buffer holds delay_steps entries"))
    }
}

/// Gravitational wrench acting on the body (world frame).
pub fn gravity_wrench(params: &BodyParams, _state: &RobotState) -> Wrench {
    Wrench::new(Vector3::new(0.0, 0.0, -params.mass * params.gravity), Vector3::zeros(), Frame::World)
}

/// Gyroscopic torque `-ω × Iω` (body frame).
pub fn gyroscopic_wrench(params: &BodyParams, state: &RobotState) -> Wrench {
    let w = state.ang_vel;
    Wrench::new(Vector3::zeros(), -w.cross(&(params.inertia * w)), Frame::Body)
}

/// Advances the state by one semi-implicit Euler step: velocities first from
/// the Newton-Euler accelerations, then pose from the new velocities. Body rates
/// are recovered from the updated world angular momentum after the rotation.
pub fn step_dynamics(
    state: &RobotState,
    params: &BodyParams,
    w_act: &Wrench,
    w_dist: &Wrench,
    dt: f64,
) -> Result<RobotState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if !state.is_finite() || !w_act.is_finite() || !w_dist.is_finite() {
        return Err(Error::NonFinite);
    }
    let q = state.orientation;
    let (fa, ta) = w_act.dynamics_components(&q);
    let (fd, td) = w_dist.dynamics_components(&q);
    let fg = gravity_wrench(params, state).force;

    let lin_acc = (fa + fd + fg) / params.mass;
    let inertia_inv = params
        .inertia
        .try_inverse()
        .ok_or_else(|| Error::InvalidParams("singular inertia".into()))?;

    // Rotational part advances the world-frame angular momentum, which makes the
    // gyroscopic term implicit and keeps |L| exact under zero torque.
    let momentum = q * (params.inertia * state.ang_vel) + q * (ta + td) * dt;
    let omega_mid = inertia_inv * q.inverse_transform_vector(&momentum);

    let lin_vel = state.lin_vel + lin_acc * dt;
    let position = state.position + lin_vel * dt;
    let orientation = if omega_mid.iter().any(|&v| v != 0.0) {
        let dq = UnitQuaternion::from_scaled_axis(omega_mid * dt);
        UnitQuaternion::new_normalize(q.into_inner() * dq.into_inner())
    } else {
        q
    };
    let ang_vel = inertia_inv * orientation.inverse_transform_vector(&momentum);
    let next = RobotState { position, orientation, lin_vel, ang_vel };
    if !next.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(next)
}

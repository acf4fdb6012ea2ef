//! Impedance control with bounded, slew-limited variable stiffness.

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{BodyParams, Frame, RobotState, Wrench};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub pos_ref: Vector3<f64>,
    pub vel_ref: Vector3<f64>,
    pub acc_ref: Vector3<f64>,
    /// World-from-body reference attitude.
    pub att_ref: UnitQuaternion<f64>,
    /// Reference body rates, expressed in the reference body frame.
    pub ang_vel_ref: Vector3<f64>,
    pub ang_acc_ref: Vector3<f64>,
}

impl Reference {
    pub fn hold(pos: Vector3<f64>, att: UnitQuaternion<f64>) -> Self {
        Self {
            pos_ref: pos,
            vel_ref: Vector3::zeros(),
            acc_ref: Vector3::zeros(),
            att_ref: att,
            ang_vel_ref: Vector3::zeros(),
            ang_acc_ref: Vector3::zeros(),
        }
    }
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Pose and velocity tracking errors `(e_s, e_v)`.
///
/// The translational halves are world-frame differences. The attitude error is
/// `½ vee(R_refᵀ R − Rᵀ R_ref)` and the rate error `ω − Rᵀ R_ref ω_ref`, both in
/// the body frame where torques are commanded.
pub fn tracking_errors(state: &RobotState, reference: &Reference) -> (Vector6<f64>, Vector6<f64>) {
    let r = state.orientation.to_rotation_matrix().into_inner();
    let r_ref = reference.att_ref.to_rotation_matrix().into_inner();
    let e_rot = 0.5 * vee(&(r_ref.transpose() * r - r.transpose() * r_ref));
    let e_omega = state.ang_vel - r.transpose() * r_ref * reference.ang_vel_ref;
    let e_pos = state.position - reference.pos_ref;
    let e_vel = state.lin_vel - reference.vel_ref;
    (stack(&e_pos, &e_rot), stack(&e_vel, &e_omega))
}

pub fn stack(a: &Vector3<f64>, b: &Vector3<f64>) -> Vector6<f64> {
    Vector6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

fn upper(v: &Vector6<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn lower(v: &Vector6<f64>) -> Vector3<f64> {
    Vector3::new(v[3], v[4], v[5])
}

/// `d_i = 2 ζ √k_i`.
pub fn damping_from_stiffness(k: &Vector6<f64>, zeta: f64) -> Vector6<f64> {
    k.map(|ki| 2.0 * zeta * ki.sqrt())
}

/// Diagonal stiffness bounded to `[k_min, k_max]` with a per-axis slew limit.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub k_min: Vector6<f64>,
    pub k_max: Vector6<f64>,
    pub zeta: f64,
    /// Gain units per second.
    pub slew_rate: Vector6<f64>,
    pub k_current: Vector6<f64>,
    violations: usize,
}

impl GainSchedule {
    pub fn new(k_min: Vector6<f64>, k_max: Vector6<f64>, zeta: f64, slew_rate: Vector6<f64>, initial_action: &Vector6<f64>) -> Result<Self> {
        if (0..6).any(|i| !(k_min[i] >= 0.0 && k_max[i] >= k_min[i] && slew_rate[i] >= 0.0)) {
            return Err(Error::InvalidParams("gain bounds need 0 <= k_min <= k_max and slew >= 0".into()));
        }
        let k_current = stiffness_for_action(&k_min, &k_max, initial_action);
        Ok(Self { k_min, k_max, zeta, slew_rate, k_current, violations: 0 })
    }

    /// Maps an action in `(0,1)^6` to stiffness, slew-limits it against the
    /// current gains over `dt` seconds and stores the result.
    pub fn adaptive_stiffness(&mut self, action: &Vector6<f64>, dt: f64) -> Result<Vector6<f64>> {
        if let Some(i) = (0..6).find(|&i| !(action[i] > 0.0 && action[i] < 1.0)) {
            return Err(Error::Contract(format!("action[{i}] = {} outside (0, 1)", action[i])));
        }
        let target = stiffness_for_action(&self.k_min, &self.k_max, action);
        let prev = self.k_current;
        let next = Vector6::from_fn(|i, _| {
            let step = self.slew_rate[i] * dt;
            (target[i]).clamp(prev[i] - step, prev[i] + step).clamp(self.k_min[i], self.k_max[i])
        });
        for i in 0..6 {
            let slew_ok = (next[i] - prev[i]).abs() <= self.slew_rate[i] * dt * (1.0 + 1e-12) + 1e-12;
            let bound_ok = next[i] >= self.k_min[i] && next[i] <= self.k_max[i];
            if !(slew_ok && bound_ok) {
                self.violations += 1;
            }
        }
        self.k_current = next;
        Ok(next)
    }

    pub fn damping(&self) -> Vector6<f64> {
        damping_from_stiffness(&self.k_current, self.zeta)
    }

    /// Number of control steps (per axis) that broke the bound or slew invariant.
    pub fn violations(&self) -> usize {
        self.violations
    }
}

/// `k_min + (k_max − k_min) ∘ action`, without slew limiting.
pub fn stiffness_for_action(k_min: &Vector6<f64>, k_max: &Vector6<f64>, action: &Vector6<f64>) -> Vector6<f64> {
    k_min + (k_max - k_min).component_mul(action)
}

/// Impedance wrench `M a_ref − D e_v − K e_s + C ṽ + g` with `M_des = M`.
///
/// The translational part is computed in the world frame and the rotational
/// part in the body frame; the result is returned in the body frame using the
/// (estimated) attitude in `state`, as the actuator expects.
pub fn impedance_command(
    state: &RobotState,
    reference: &Reference,
    k: &Vector6<f64>,
    d: &Vector6<f64>,
    params: &BodyParams,
) -> Wrench {
    let (e_s, e_v) = tracking_errors(state, reference);
    let force_world = params.mass * reference.acc_ref
        - upper(d).component_mul(&upper(&e_v))
        - upper(k).component_mul(&upper(&e_s))
        + Vector3::new(0.0, 0.0, params.weight());
    let omega = state.ang_vel;
    let torque_body = params.inertia * reference.ang_acc_ref
        - lower(d).component_mul(&lower(&e_v))
        - lower(k).component_mul(&lower(&e_s))
        + omega.cross(&(params.inertia * omega));
    Wrench::new(state.orientation.inverse_transform_vector(&force_world), torque_body, Frame::Body)
}

/// First-order low-pass `y ← y + α (x − y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    pub alpha: f64,
    pub state: Vec<f64>,
}

impl LowPass {
    pub fn new(alpha: f64, initial: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("filter alpha {alpha} outside (0, 1]")));
        }
        Ok(Self { alpha, state: initial })
    }

    /// Blend factor of a first-order filter with cutoff `hz` sampled every `dt`.
    pub fn alpha_for_cutoff(hz: f64, dt: f64) -> f64 {
        if hz <= 0.0 || !hz.is_finite() {
            return 1.0;
        }
        (1.0 - (-2.0 * std::f64::consts::PI * hz * dt).exp()).clamp(f64::MIN_POSITIVE, 1.0)
    }

    pub fn from_cutoff(hz: f64, dt: f64, initial: Vec<f64>) -> Self {
        Self { alpha: Self::alpha_for_cutoff(hz, dt), state: initial }
    }

    pub fn step(&mut self, x: &[f64]) -> &[f64] {
        assert_eq!(x.len(), self.state.len(), "filter dimension mismatch");
        for (y, &xi) in self.state.iter_mut().zip(x) {
            *y += self.alpha * (xi - *y);
        }
        &self.state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainConfig {
    pub k_min: Vector6<f64>,
    pub k_max: Vector6<f64>,
    pub zeta: f64,
    /// Time to sweep the full gain range at the slew limit (s).
    pub slew_full_range_s: f64,
    /// Cutoff of the policy output filter (Hz).
    pub action_filter_hz: f64,
    /// Indices of the gain axes driven by the policy.
    pub adapted_axes: Vec<usize>,
    /// Action used on axes the policy does not drive and before the policy starts.
    pub hold_action: Vector6<f64>,
    /// Constant action of the fixed-gain baseline on the adapted axes.
    pub baseline_action: Vec<f64>,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            k_min: Vector6::new(20.0, 20.0, 20.0, 2.0, 2.0, 2.0),
            k_max: Vector6::new(200.0, 200.0, 200.0, 20.0, 20.0, 20.0),
            zeta: 0.7,
            slew_full_range_s: 0.5,
            action_filter_hz: 2.0,
            adapted_axes: vec![0, 4],
            hold_action: Vector6::repeat(0.75),
            baseline_action: vec![0.75, 0.75],
        }
    }
}

impl GainConfig {
    pub fn slew_rate(&self) -> Vector6<f64> {
        (self.k_max - self.k_min) / self.slew_full_range_s
    }

    pub fn schedule(&self, initial_action: &Vector6<f64>) -> Result<GainSchedule> {
        GainSchedule::new(self.k_min, self.k_max, self.zeta, self.slew_rate(), initial_action)
    }

    pub fn action_dim(&self) -> usize {
        self.adapted_axes.len()
    }

    /// Embeds a policy action into the full 6-axis action using `hold_action`.
    pub fn full_action(&self, adapted: &[f64]) -> Vector6<f64> {
        let mut a = self.hold_action;
        for (&axis, &v) in self.adapted_axes.iter().zip(adapted) {
            a[axis] = v;
        }
        a
    }

    /// Gains of the fixed baseline controller.
    pub fn baseline_gains(&self) -> Vector6<f64> {
        stiffness_for_action(&self.k_min, &self.k_max, &self.full_action(&self.baseline_action))
    }

    /// Gains with the adapted axes set directly (used by the gain sweep).
    pub fn gains_with(&self, adapted_k: &[f64]) -> Vector6<f64> {
        let mut k = stiffness_for_action(&self.k_min, &self.k_max, &self.hold_action);
        for (&axis, &v) in self.adapted_axes.iter().zip(adapted_k) {
            k[axis] = v;
        }
        k
    }

    pub fn validate(&self) -> Result<()> {
        if self.adapted_axes.iter().any(|&a| a >= 6) {
            return Err(Error::Config("adapted axis index must be < 6".into()));
        }
        if self.baseline_action.len() != self.adapted_axes.len() {
            return Err(Error::Config("baseline_action length must match adapted_axes".into()));
        }
        if !(self.slew_full_range_s > 0.0) {
            return Err(Error::Config("slew_full_range_s must be positive".into()));
        }
        self.schedule(&self.hold_action).map(|_| ())
    }
}

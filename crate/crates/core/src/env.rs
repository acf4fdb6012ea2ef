//! Closed-loop episode simulation shared by training and evaluation.
//!
//! Three nested rates: rigid-body physics, the impedance controller (sensing,
//! features, gain update, wrench command) and the gain policy, which holds its
//! action between updates. The policy only acts during the sliding phase; the
//! approach runs on the hold action.

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{impedance_command, tracking_errors, GainConfig, GainSchedule, LowPass};
use crate::dynamics::{step_dynamics, ActuatorConfig, ActuatorModel, BodyParams, Frame, RobotState, Wrench};
use crate::error::{Error, Result};
use crate::learning::perturb::{perturb_instance, InstanceParams, PerturbConfig};
use crate::learning::reward::{compute_reward, smoothness_penalty, RewardTerms, RewardWeights};
use crate::policy::{build_features, privileged_features, FeatureConfig, FeatureFilters, FeatureVector, PrivilegedFeatures};
use crate::scenarios::{Phase, ScenarioSpec, World};
use crate::sensing::{SensorModel, Sensors};
use crate::terrain::{compute_contact, ContactParams, ContactResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub physics_hz: u32,
    pub control_hz: u32,
    pub policy_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self { physics_hz: 400, control_hz: 100, policy_hz: 20 }
    }
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        let ok = self.policy_hz > 0
            && self.control_hz >= self.policy_hz
            && self.physics_hz >= self.control_hz
            && self.physics_hz % self.control_hz == 0
            && self.control_hz % self.policy_hz == 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("rates must divide: physics {} | control {} | policy {}", self.physics_hz, self.control_hz, self.policy_hz)))
        }
    }

    pub fn physics_dt(&self) -> f64 {
        1.0 / self.physics_hz as f64
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_hz as f64
    }

    pub fn substeps(&self) -> usize {
        (self.physics_hz / self.control_hz) as usize
    }

    pub fn control_per_policy(&self) -> usize {
        (self.control_hz / self.policy_hz) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultConfig {
    pub max_tilt_deg: f64,
    /// Largest tip distance from the nominal plane, either side (m).
    pub max_normal_offset: f64,
    pub max_lateral_offset: f64,
    /// Magnitude of the terminal penalty of a faulted episode.
    pub penalty: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self { max_tilt_deg: 60.0, max_normal_offset: 0.5, max_lateral_offset: 0.5, penalty: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    NonFinite,
    Tilt,
    Arena,
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FaultKind::NonFinite => "non_finite",
            FaultKind::Tilt => "tilt",
            FaultKind::Arena => "arena",
        })
    }
}

/// Everything that defines a closed-loop episode apart from the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub body: BodyParams,
    pub actuator: ActuatorConfig,
    pub contact: ContactParams,
    pub gains: GainConfig,
    pub features: FeatureConfig,
    pub sensor: SensorModel,
    pub rates: Rates,
    pub scenario: ScenarioSpec,
    pub reward: RewardWeights,
    pub fault: FaultConfig,
    pub perturb: PerturbConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            body: BodyParams::default(),
            actuator: ActuatorConfig::default(),
            contact: ContactParams::default(),
            gains: GainConfig::default(),
            features: FeatureConfig::default(),
            sensor: SensorModel::default(),
            rates: Rates::default(),
            scenario: ScenarioSpec::default(),
            reward: RewardWeights::default(),
            fault: FaultConfig::default(),
            perturb: PerturbConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.body.validate()?;
        self.contact.validate()?;
        self.gains.validate()?;
        self.sensor.validate()?;
        self.rates.validate()?;
        self.scenario.validate()?;
        self.reward.validate()?;
        self.perturb.validate()
    }

    pub fn action_dim(&self) -> usize {
        self.gains.action_dim()
    }

    /// Policy steps in the sliding phase.
    pub fn sliding_steps(&self) -> usize {
        (self.scenario.trajectory.sliding_time * self.rates.policy_hz as f64).round() as usize
    }

    fn nominal_instance(&self) -> InstanceParams {
        InstanceParams { body: self.body.clone(), contact: self.contact, actuator: self.actuator.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Fixed gains from the configured baseline action.
    Baseline,
    /// Gains driven by the action passed to [`Env::step`].
    Variable,
}

/// splitmix64 finalizer; derives independent stream seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub z: FeatureVector,
    pub privileged: PrivilegedFeatures,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    /// Control-step terms averaged over the policy interval, plus smoothness.
    pub reward: RewardTerms,
    pub done: bool,
    pub fault: Option<FaultKind>,
}

/// One control-rate sample of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub sliding: bool,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub lin_vel: Vector3<f64>,
    pub ang_vel: Vector3<f64>,
    pub pos_ref: Vector3<f64>,
    pub e_s: Vector6<f64>,
    pub e_v: Vector6<f64>,
    pub k: Vector6<f64>,
    pub action: Vec<f64>,
    /// Contact force (world) and torque about the center of mass (body).
    pub wrench_true: Wrench,
    /// Sensor reading (body frame).
    pub wrench_meas: Wrench,
    pub in_contact: bool,
    pub mu: f64,
    pub s: f64,
    pub penetration: f64,
    pub separation: f64,
    /// Contact normal in the nominal surface frame `(slide, lateral, normal)`.
    pub normal_local: Vector3<f64>,
    pub tilt_deg: f64,
    pub reward: RewardTerms,
    pub z: FeatureVector,
}

/// Angle between the body z axis and the reference z axis (deg).
pub fn tilt_deg(q: &UnitQuaternion<f64>, q_ref: &UnitQuaternion<f64>) -> f64 {
    let a = q * Vector3::z();
    let b = q_ref * Vector3::z();
    a.dot(&b).clamp(-1.0, 1.0).acos().to_degrees()
}

pub struct Env {
    pub cfg: SimConfig,
    pub mode: ControllerMode,
    pub instance: InstanceParams,
    pub world: World,
    state: RobotState,
    actuator: ActuatorModel,
    sensors: Sensors,
    sensor_rng: ChaCha8Rng,
    schedule: GainSchedule,
    action_filter: LowPass,
    filters: FeatureFilters,
    contact: ContactResult,
    command: Wrench,
    /// Raw adapted action currently held.
    action: Vec<f64>,
    last_z: FeatureVector,
    step: usize,
    fault: Option<FaultKind>,
    log: Option<Vec<LogRow>>,
}

impl Env {
    /// Builds an instance. Property jitter, terrain draws and sensor noise all
    /// derive from `seed`.
    pub fn new(cfg: &SimConfig, mode: ControllerMode, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let instance = perturb_instance(&cfg.nominal_instance(), &cfg.perturb, &mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 1)));
        instance.body.validate()?;
        let world = cfg.scenario.build(&cfg.body, &mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 2)))?;
        let r0 = world.reference.at(0.0);
        let state = RobotState::at_rest(r0.pos_ref, r0.att_ref);
        let mut actuator = ActuatorModel::new(&instance.actuator);
        let hover = Vector3::new(0.0, 0.0, cfg.body.weight());
        actuator.prefill(Wrench::new(state.orientation.inverse_transform_vector(&hover), Vector3::zeros(), Frame::Body));
        let hold = cfg.gains.baseline_action.clone();
        let schedule = cfg.gains.schedule(&cfg.gains.full_action(&hold))?;
        let action_filter = LowPass::from_cutoff(cfg.gains.action_filter_hz, cfg.rates.control_dt(), hold.clone());
        let filters = FeatureFilters::new(&cfg.features, cfg.rates.control_dt());
        let contact = compute_contact(&state, &instance.body, &world.terrain, &instance.contact);
        Ok(Self {
            cfg: cfg.clone(),
            mode,
            instance,
            world,
            state,
            actuator,
            sensors: Sensors::new(cfg.sensor.clone()),
            sensor_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 3)),
            schedule,
            action_filter,
            filters,
            contact,
            command: Wrench::zero(Frame::Body),
            action: hold,
            last_z: FeatureVector([0.0; 6]),
            step: 0,
            fault: None,
            log: None,
        })
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn take_log(&mut self) -> Vec<LogRow> {
        self.log.take().unwrap_or_default()
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.rates.control_dt()
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn contact(&self) -> &ContactResult {
        &self.contact
    }

    pub fn fault(&self) -> Option<FaultKind> {
        self.fault
    }

    pub fn gain_violations(&self) -> usize {
        self.schedule.violations()
    }

    fn end_step(&self) -> usize {
        (self.cfg.scenario.trajectory.total_time() * self.cfg.rates.control_hz as f64).round() as usize
    }

    fn sliding_start_step(&self) -> usize {
        (self.cfg.scenario.trajectory.approach_time * self.cfg.rates.control_hz as f64).round() as usize
    }

    fn observation(&mut self) -> Observation {
        let local = self.world.terrain.frame.to_local(&self.state.tip_position(&self.instance.body));
        let mu_filtered = self.filters.mu.state[0];
        let privileged = privileged_features(self.last_z, &self.world.terrain, local.x, local.y, &self.cfg.features, mu_filtered);
        Observation { z: self.last_z, privileged, t: self.time() }
    }

    /// Runs the approach phase on the hold action and returns the first
    /// sliding-phase observation.
    pub fn reset(&mut self) -> Result<Observation> {
        let start = self.sliding_start_step();
        while self.step < start && self.fault.is_none() {
            self.control_step()?;
        }
        Ok(self.observation())
    }

    pub fn is_done(&self) -> bool {
        self.fault.is_some() || self.step >= self.end_step()
    }

    /// Applies `action` (adapted axes, in (0, 1)) for one policy interval.
    /// Ignored in baseline mode.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != self.cfg.action_dim() {
            return Err(Error::Dimension { expected: self.cfg.action_dim(), got: action.len() });
        }
        if self.is_done() {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        let prev = std::mem::replace(&mut self.action, action.to_vec());
        let n = self.cfg.rates.control_per_policy();
        let mut acc = RewardTerms::default();
        let mut taken = 0;
        for _ in 0..n {
            if self.is_done() {
                break;
            }
            acc.add(&self.control_step()?);
            taken += 1;
        }
        let mut reward = acc.scaled(1.0 / taken.max(1) as f64);
        if self.mode == ControllerMode::Variable {
            reward.smoothness = -self.cfg.reward.l_a * smoothness_penalty(action, &prev);
        }
        let obs = self.observation();
        Ok(StepOutcome { obs, reward, done: self.is_done(), fault: self.fault })
    }

    fn gains(&mut self, dt: f64) -> Result<Vector6<f64>> {
        match self.mode {
            ControllerMode::Baseline => Ok(self.cfg.gains.baseline_gains()),
            ControllerMode::Variable => {
                let filtered = self.action_filter.step(&self.action).to_vec();
                let full = self.cfg.gains.full_action(&filtered);
                self.schedule.adaptive_stiffness(&full, dt)
            }
        }
    }

    fn control_step(&mut self) -> Result<RewardTerms> {
        let dt_c = self.cfg.rates.control_dt();
        let t = self.time();
        let reference = self.world.reference.at(t);
        let estimate = self.sensors.measure_state(&self.state, &mut self.sensor_rng);
        let wrench_meas = self.sensors.measure_wrench(&self.contact, dt_c, &mut self.sensor_rng);
        let est_errors = tracking_errors(&estimate, &reference);
        self.last_z = build_features(&estimate, &est_errors, &wrench_meas, &mut self.filters, &self.world.nominal)?;
        // same contact sample as the wrench reading, so teacher and student see aligned signals
        self.filters.mu.step(&[self.contact.mu]);

        let k = self.gains(dt_c)?;
        let d = crate::control::damping_from_stiffness(&k, self.cfg.gains.zeta);
        self.command = impedance_command(&estimate, &reference, &k, &d, &self.cfg.body);

        let dt_p = self.cfg.rates.physics_dt();
        for _ in 0..self.cfg.rates.substeps() {
            let w_act = self.actuator.apply_actuation(&self.command)?;
            self.contact = compute_contact(&self.state, &self.instance.body, &self.world.terrain, &self.instance.contact);
            match step_dynamics(&self.state, &self.instance.body, &w_act, &self.contact.wrench_body, dt_p) {
                Ok(s) => self.state = s,
                Err(Error::NonFinite) => {
                    self.fault = Some(FaultKind::NonFinite);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if self.fault.is_none() {
            self.contact = compute_contact(&self.state, &self.instance.body, &self.world.terrain, &self.instance.contact);
        }
        self.step += 1;

        let reference_next = self.world.reference.at(self.time());
        let (e_s, e_v) = tracking_errors(&self.state, &reference_next);
        let e_r = Vector3::new(e_s[3], e_s[4], e_s[5]);
        let e_p = Vector3::new(e_s[0], e_s[1], e_s[2]);
        let reward = compute_reward(&e_r, &e_p, self.contact.separation, &self.state.ang_vel, &[], &[], &self.cfg.reward);
        let tilt = tilt_deg(&self.state.orientation, &reference_next.att_ref);
        if self.fault.is_none() {
            self.fault = self.check_fault(tilt);
        }

        if let Some(log) = self.log.as_mut() {
            let nominal = &self.world.nominal;
            let n = self.contact.n_perp;
            log.push(LogRow {
                t: self.step as f64 * dt_c,
                sliding: self.world.reference.phase(t) == Phase::Sliding,
                position: self.state.position,
                orientation: self.state.orientation,
                lin_vel: self.state.lin_vel,
                ang_vel: self.state.ang_vel,
                pos_ref: reference_next.pos_ref,
                e_s,
                e_v,
                k,
                action: self.action.clone(),
                wrench_true: Wrench::new(self.contact.force_world, self.contact.wrench_body.torque, Frame::World),
                wrench_meas,
                in_contact: self.contact.in_contact,
                mu: self.contact.mu,
                s: self.contact.s,
                penetration: self.contact.penetration,
                separation: self.contact.separation,
                normal_local: Vector3::new(n.dot(&nominal.slide), n.dot(&nominal.lateral()), n.dot(&nominal.normal)),
                tilt_deg: tilt,
                reward,
                z: self.last_z,
            });
        }
        Ok(reward)
    }

    fn check_fault(&self, tilt: f64) -> Option<FaultKind> {
        if !self.state.is_finite() {
            return Some(FaultKind::NonFinite);
        }
        if tilt > self.cfg.fault.max_tilt_deg {
            return Some(FaultKind::Tilt);
        }
        let local = self.world.nominal.to_local(&self.state.tip_position(&self.instance.body));
        let (lo, hi) = self.cfg.scenario.arena();
        if local.x < lo || local.x > hi || local.y.abs() > self.cfg.fault.max_lateral_offset || local.z.abs() > self.cfg.fault.max_normal_offset {
            return Some(FaultKind::Arena);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.scenario.trajectory.sliding_time = 2.0;
        cfg
    }

    #[test]
    fn rates_must_divide() {
        assert!(Rates { physics_hz: 400, control_hz: 100, policy_hz: 20 }.validate().is_ok());
        assert!(Rates { physics_hz: 400, control_hz: 150, policy_hz: 50 }.validate().is_err());
        assert!(Rates { physics_hz: 400, control_hz: 100, policy_hz: 30 }.validate().is_err());
    }

    #[test]
    fn mix_seed_separates_streams() {
        assert_ne!(mix_seed(1, 1), mix_seed(1, 2));
        assert_ne!(mix_seed(1, 1), mix_seed(2, 1));
        assert_eq!(mix_seed(5, 9), mix_seed(5, 9));
    }

    #[test]
    fn episode_length_and_contact() {
        let cfg = quick_cfg();
        let mut env = Env::new(&cfg, ControllerMode::Baseline, 3).unwrap();
        env.reset().unwrap();
        assert!(env.contact().in_contact, "tip should touch the surface after the approach");
        let mut n = 0;
        let a = cfg.gains.baseline_action.clone();
        while !env.is_done() {
            env.step(&a).unwrap();
            n += 1;
        }
        assert_eq!(n, cfg.sliding_steps());
        assert!(env.fault().is_none());
    }

    #[test]
    fn constant_action_matches_baseline_bitwise() {
        let cfg = quick_cfg();
        let a = cfg.gains.baseline_action.clone();
        let run = |mode| {
            let mut env = Env::new(&cfg, mode, 11).unwrap().with_log();
            env.reset().unwrap();
            while !env.is_done() {
                env.step(&a).unwrap();
            }
            env.take_log()
        };
        let (b, v) = (run(ControllerMode::Baseline), run(ControllerMode::Variable));
        assert_eq!(b.len(), v.len());
        for (x, y) in b.iter().zip(&v) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.orientation, y.orientation);
            assert_eq!(x.k, y.k);
        }
    }

    #[test]
    fn action_dimension_checked() {
        let cfg = quick_cfg();
        let mut env = Env::new(&cfg, ControllerMode::Variable, 1).unwrap();
        env.reset().unwrap();
        assert!(matches!(env.step(&[0.5]), Err(Error::Dimension { .. })));
    }
}

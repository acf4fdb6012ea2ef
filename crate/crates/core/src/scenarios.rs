//! Evaluation and training worlds and their reference trajectories.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::Reference;
use crate::dynamics::BodyParams;
use crate::error::{Error, Result};
use crate::terrain::{SurfaceFrame, Terrain, TerrainConfig};

pub const FLAT6_FRICTION: [f64; 6] = [0.05, 0.15, 0.25, 0.45, 0.55, 0.62];
pub const ROCK_FRICTION: [f64; 6] = [0.1, 0.15, 0.45, 0.6, 0.75, 0.9];
pub const WHITEBOARD_MU: f64 = 0.15;
pub const SANDPAPER_MU: f64 = 0.55;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    /// Commanded tip depth behind the nominal plane (m).
    pub delta: f64,
    /// Sliding speed (m/s).
    pub speed: f64,
    /// Duration of the constant-speed sliding phase (s).
    pub sliding_time: f64,
    /// Free-flight approach and ramp-up before sliding (s).
    pub approach_time: f64,
    /// Initial tip distance in front of the nominal plane (m).
    pub standoff: f64,
    /// Arclength of the tip at the start (m).
    pub start_s: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self { delta: 0.07, speed: 0.2, sliding_time: 15.0, approach_time: 3.0, standoff: 0.1, start_s: 0.0 }
    }
}

impl TrajectorySpec {
    /// Path length covered while sliding at constant speed.
    pub fn length(&self) -> f64 {
        self.speed * self.sliding_time
    }

    pub fn total_time(&self) -> f64 {
        self.approach_time + self.sliding_time
    }

    /// The ramp to sliding speed occupies the last third of the approach.
    fn ramp_time(&self) -> f64 {
        self.approach_time / 3.0
    }

    /// Arclength reached at the end of the sliding phase.
    pub fn end_s(&self) -> f64 {
        self.start_s + 0.5 * self.speed * self.ramp_time() + self.length()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.speed >= 0.0) || !(self.sliding_time >= 0.0) || !(self.approach_time > 0.0) || !(self.standoff >= 0.0) {
            return Err(Error::InvalidParams("trajectory needs delta > 0, speed >= 0, approach_time > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Equal-length flat patches, each with μ drawn from the set.
    FlatHeterogeneous { friction_set: Vec<f64>, patch_length: f64 },
    /// Explicit flat patches `(length, mu)` laid out from the start of the path.
    /// The first patch also covers the margin before it, the last one runs to the end.
    Sequence { patches: Vec<(f64, f64)> },
    /// Flat run followed by a raised patch whose face blocks the tip.
    StepTerrain { step_height: f64, step_s: f64, friction_set: Vec<f64> },
    /// Procedural heightmap with μ resampled every `resample_period_s` of travel.
    RockLike { seed: u64, friction_set: Vec<f64>, resample_period_s: f64, amplitude: f64, cell_size: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub trajectory: TrajectorySpec,
    /// Standard deviation of the nominal-plane offset error (m).
    pub map_offset_std: f64,
    /// Standard deviation of the nominal-plane tilt error (rad).
    pub map_tilt_std: f64,
    /// Arena margin before the start and after the end of the path (m).
    pub margin: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::preset("flat6").expect("builtin preset")
    }
}

/// Everything an episode needs from a scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub terrain: Terrain,
    /// Plane the controller believes in; differs from the terrain frame by map error.
    pub nominal: SurfaceFrame,
    pub reference: ReferenceTrajectory,
}

impl ScenarioSpec {
    pub const PRESETS: [&'static str; 5] = ["flat6", "wsw", "step1cm", "step2cm", "rock"];

    pub fn preset(name: &str) -> Result<Self> {
        let trajectory = TrajectorySpec::default();
        let kind = match name {
            "flat6" => ScenarioKind::FlatHeterogeneous { friction_set: FLAT6_FRICTION.to_vec(), patch_length: 0.5 },
            "wsw" => ScenarioKind::Sequence { patches: vec![(1.5, WHITEBOARD_MU), (1.0, SANDPAPER_MU), (2.5, WHITEBOARD_MU)] },
            "step1cm" => ScenarioKind::StepTerrain { step_height: 0.01, step_s: 1.5, friction_set: vec![0.3] },
            "step2cm" => ScenarioKind::StepTerrain { step_height: 0.02, step_s: 1.5, friction_set: vec![0.3] },
            "rock" => ScenarioKind::RockLike {
                seed: 1,
                friction_set: ROCK_FRICTION.to_vec(),
                resample_period_s: 4.0,
                amplitude: 0.02,
                cell_size: 0.1,
            },
            other => return Err(Error::Config(format!("unknown scenario preset '{other}'"))),
        };
        Ok(Self { kind, trajectory, map_offset_std: 0.0, map_tilt_std: 0.0, margin: 0.5 })
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        let set_ok = |set: &Vec<f64>| !set.is_empty() && set.iter().all(|&m| m >= 0.0 && m.is_finite());
        let ok = match &self.kind {
            ScenarioKind::FlatHeterogeneous { friction_set, patch_length } => set_ok(friction_set) && *patch_length > 0.0,
            ScenarioKind::Sequence { patches } => !patches.is_empty() && patches.iter().all(|&(l, m)| l > 0.0 && m >= 0.0),
            ScenarioKind::StepTerrain { step_height, friction_set, .. } => set_ok(friction_set) && *step_height >= 0.0,
            ScenarioKind::RockLike { friction_set, resample_period_s, amplitude, cell_size, .. } => {
                set_ok(friction_set) && *resample_period_s > 0.0 && *amplitude >= 0.0 && *cell_size > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid scenario {:?}", self.kind)))
        }
    }

    /// Arclength interval of the arena.
    pub fn arena(&self) -> (f64, f64) {
        (self.trajectory.start_s - self.margin, self.trajectory.end_s() + self.margin)
    }

    /// Builds the true terrain, the (possibly mis-registered) nominal plane and
    /// the reference. `rng` drives friction assignment and map error.
    pub fn build<R: Rng>(&self, params: &BodyParams, rng: &mut R) -> Result<World> {
        self.validate()?;
        let frame = SurfaceFrame::default();
        let (start, end) = self.arena();
        let terrain = match &self.kind {
            ScenarioKind::FlatHeterogeneous { friction_set, patch_length } => make_flat_heterogeneous(friction_set, *patch_length, start, end, frame.clone(), rng)?,
            ScenarioKind::Sequence { patches } => {
                let mut triples: Vec<(f64, f64, f64)> = patches.iter().map(|&(l, m)| (l, 0.0, m)).collect();
                triples[0].0 += self.trajectory.start_s - start;
                let covered: f64 = triples.iter().map(|t| t.0).sum();
                if start + covered < end {
                    let last = triples[triples.len() - 1];
                    triples.push((end - start - covered, 0.0, last.2));
                }
                Terrain::from_triples(start, &triples, frame.clone())?
            }
            ScenarioKind::StepTerrain { step_height, step_s, friction_set } => {
                let mu_low = friction_set[rng.gen_range(0..friction_set.len())];
                let mu_high = friction_set[rng.gen_range(0..friction_set.len())];
                make_step_terrain(*step_height, *step_s, start, end, (mu_low, mu_high), frame.clone())?
            }
            ScenarioKind::RockLike { seed, friction_set, resample_period_s, amplitude, cell_size } => make_rocklike(
                *seed,
                friction_set,
                self.trajectory.speed.max(1e-3) * resample_period_s,
                *amplitude,
                *cell_size,
                start,
                end,
                frame.clone(),
            )?,
        };
        let nominal = if self.map_offset_std > 0.0 || self.map_tilt_std > 0.0 {
            let offset = self.map_offset_std * rng.gen_range(-1.0..=1.0);
            let tilt = self.map_tilt_std * rng.gen_range(-1.0..=1.0);
            frame.jittered(offset, tilt)
        } else {
            frame
        };
        let reference = make_reference(&self.trajectory, &nominal, params)?;
        Ok(World { terrain, nominal, reference })
    }
}

pub fn make_flat_heterogeneous<R: Rng>(
    friction_set: &[f64],
    patch_length: f64,
    start: f64,
    end: f64,
    frame: SurfaceFrame,
    rng: &mut R,
) -> Result<Terrain> {
    if friction_set.is_empty() || !(patch_length > 0.0) || !(end > start) {
        return Err(Error::InvalidParams("flat terrain needs a friction set and a positive extent".into()));
    }
    let n = ((end - start) / patch_length).ceil() as usize;
    let triples: Vec<_> = (0..n)
        .map(|k| {
            let len = if k + 1 == n { end - start - patch_length * (n - 1) as f64 } else { patch_length };
            (len, 0.0, friction_set[rng.gen_range(0..friction_set.len())])
        })
        .collect();
    Terrain::from_triples(start, &triples, frame)
}

/// Flat surface up to `step_s`, raised by `step_height` beyond.
pub fn make_step_terrain(step_height: f64, step_s: f64, start: f64, end: f64, mu: (f64, f64), frame: SurfaceFrame) -> Result<Terrain> {
    if !(step_height >= 0.0) || !(step_s > start && step_s < end) {
        return Err(Error::InvalidParams("step must lie inside the arena with height >= 0".into()));
    }
    Terrain::from_triples(start, &[(step_s - start, 0.0, mu.0), (end - step_s, step_height, mu.1)], frame)
}

#[allow(clippy::too_many_arguments)]
pub fn make_rocklike(
    seed: u64,
    friction_set: &[f64],
    mu_span: f64,
    amplitude: f64,
    cell_size: f64,
    start: f64,
    end: f64,
    frame: SurfaceFrame,
) -> Result<Terrain> {
    TerrainConfig::Procedural { seed, cell_size, amplitude, mu_set: friction_set.to_vec(), mu_span, start_s: start, length: end - start }.build(frame)
}

/// Attitude whose body x axis points into the surface and body z along the slide.
pub fn reference_attitude(frame: &SurfaceFrame) -> UnitQuaternion<f64> {
    let x = -frame.normal;
    let z = frame.slide;
    let y = z.cross(&x);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Approach,
    Sliding,
    Done,
}

/// Time-indexed reference built from the nominal plane only.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub spec: TrajectorySpec,
    pub frame: SurfaceFrame,
    pub att_ref: UnitQuaternion<f64>,
    /// World offset from the reference tip to the reference center of mass.
    tip_to_com: Vector3<f64>,
}

fn smoothstep(u: f64) -> (f64, f64, f64) {
    let u = u.clamp(0.0, 1.0);
    (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u), 6.0 - 12.0 * u)
}

pub fn make_reference(spec: &TrajectorySpec, nominal: &SurfaceFrame, params: &BodyParams) -> Result<ReferenceTrajectory> {
    spec.validate()?;
    let att_ref = reference_attitude(nominal);
    let tip_to_com = -(att_ref * params.lever_arm());
    Ok(ReferenceTrajectory { spec: spec.clone(), frame: nominal.clone(), att_ref, tip_to_com })
}

impl ReferenceTrajectory {
    pub fn phase(&self, t: f64) -> Phase {
        if t < self.spec.approach_time {
            Phase::Approach
        } else if t <= self.spec.total_time() {
            Phase::Sliding
        } else {
            Phase::Done
        }
    }

    /// Reference tip `(s, d)` with first and second derivatives.
    fn tip_profile(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let sp = &self.spec;
        let t_press = sp.approach_time - sp.ramp_time();
        let (d0, d1) = (sp.standoff, -sp.delta);
        let d = if t < t_press {
            let (u, du, ddu) = smoothstep(t / t_press);
            [d0 + (d1 - d0) * u, (d1 - d0) * du / t_press, (d1 - d0) * ddu / (t_press * t_press)]
        } else {
            [d1, 0.0, 0.0]
        };
        let ramp = sp.ramp_time();
        let s = if t < t_press {
            [sp.start_s, 0.0, 0.0]
        } else if t < sp.approach_time {
            let tau = t - t_press;
            let a = sp.speed / ramp;
            [sp.start_s + 0.5 * a * tau * tau, a * tau, a]
        } else {
            let tau = t.min(sp.total_time()) - sp.approach_time;
            let moving = t <= sp.total_time();
            [sp.start_s + 0.5 * sp.speed * ramp + sp.speed * tau, if moving { sp.speed } else { 0.0 }, 0.0]
        };
        (s, d)
    }

    /// Commanded tip position in the world frame.
    pub fn tip_at(&self, t: f64) -> Vector3<f64> {
        let (s, d) = self.tip_profile(t);
        self.frame.to_world(s[0], 0.0, d[0])
    }

    pub fn at(&self, t: f64) -> Reference {
        let (s, d) = self.tip_profile(t);
        let f = &self.frame;
        Reference {
            pos_ref: f.to_world(s[0], 0.0, d[0]) + self.tip_to_com,
            vel_ref: f.slide * s[1] + f.normal * d[1],
            acc_ref: f.slide * s[2] + f.normal * d[2],
            att_ref: self.att_ref,
            ang_vel_ref: Vector3::zeros(),
            ang_acc_ref: Vector3::zeros(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_friction_is_uniform() {
        let t = make_flat_heterogeneous(&[0.3], 0.5, -0.5, 4.0, SurfaceFrame::default(), &mut rng(1)).unwrap();
        assert!(t.patches.iter().all(|p| p.mu == 0.3 && p.height == 0.0));
        assert_relative_eq!(t.span().1, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn flat6_is_seeded_and_uses_the_set() {
        let spec = ScenarioSpec::preset("flat6").unwrap();
        let p = BodyParams::default();
        let a = spec.build(&p, &mut rng(7)).unwrap();
        let b = spec.build(&p, &mut rng(7)).unwrap();
        assert_eq!(a.terrain, b.terrain);
        assert!(a.terrain.patches.iter().all(|p| FLAT6_FRICTION.contains(&p.mu)));
        let c = spec.build(&p, &mut rng(8)).unwrap();
        assert_ne!(a.terrain, c.terrain);
    }

    #[test]
    fn wsw_layout() {
        let spec = ScenarioSpec::preset("wsw").unwrap();
        let w = spec.build(&BodyParams::default(), &mut rng(0)).unwrap();
        let mu = |s: f64| w.terrain.query_surface(s).unwrap().mu;
        assert_eq!(mu(-0.4), WHITEBOARD_MU);
        assert_eq!(mu(1.49), WHITEBOARD_MU);
        assert_eq!(mu(1.51), SANDPAPER_MU);
        assert_eq!(mu(2.49), SANDPAPER_MU);
        assert_eq!(mu(2.51), WHITEBOARD_MU);
        assert_eq!(mu(w.terrain.span().1 - 1e-6), WHITEBOARD_MU);
    }

    #[test]
    fn step_heights() {
        let f = SurfaceFrame::default();
        let flat = make_step_terrain(0.0, 1.5, -0.5, 4.0, (0.3, 0.3), f.clone()).unwrap();
        assert!(flat.patches.iter().all(|p| p.height == 0.0));
        for h in [0.01, 0.02] {
            let t = make_step_terrain(h, 1.5, -0.5, 4.0, (0.3, 0.3), f.clone()).unwrap();
            assert_eq!(t.query_surface(1.4).unwrap().height, 0.0);
            assert_eq!(t.query_surface(1.6).unwrap().height, h);
        }
        assert!(make_step_terrain(-0.01, 1.5, -0.5, 4.0, (0.3, 0.3), f).is_err());
    }

    #[test]
    fn rock_seeds_differ_with_same_statistics() {
        let f = SurfaceFrame::default();
        let a = make_rocklike(1, &ROCK_FRICTION, 0.8, 0.02, 0.1, -0.5, 4.0, f.clone()).unwrap();
        let b = make_rocklike(2, &ROCK_FRICTION, 0.8, 0.02, 0.1, -0.5, 4.0, f.clone()).unwrap();
        assert_ne!(a, b);
        for t in [&a, &b] {
            assert!(t.patches.iter().all(|p| ROCK_FRICTION.contains(&p.mu)));
            assert!(t.patches[..t.patches.len() - 1].iter().all(|p| (p.end_s - p.start_s - 0.8).abs() < 1e-9));
            let hm = t.heightmap().unwrap();
            assert_eq!(hm.amplitude, 0.02);
            assert_eq!(hm.cell_size, 0.1);
        }
        let flat = make_rocklike(1, &ROCK_FRICTION, 0.8, 0.0, 0.1, -0.5, 4.0, f).unwrap();
        for k in 0..100 {
            assert_eq!(flat.query_surface_at(-0.4 + k as f64 * 0.04, 0.01).unwrap().height, 0.0);
        }
    }

    #[test]
    fn sliding_path_length_and_depth() {
        let spec = TrajectorySpec::default();
        assert_relative_eq!(spec.length(), 3.0, epsilon = 1e-12);
        let r = make_reference(&spec, &SurfaceFrame::default(), &BodyParams::default()).unwrap();
        let s_start = r.tip_at(spec.approach_time).z;
        let s_end = r.tip_at(spec.total_time()).z;
        assert_relative_eq!(s_end - s_start, 3.0, epsilon = 1e-12);
        for k in 0..=150 {
            let t = spec.approach_time + k as f64 * 0.1;
            let tip = r.tip_at(t);
            assert_relative_eq!(tip.x, 0.07, epsilon = 1e-15);
            let re = r.at(t);
            assert_relative_eq!(re.vel_ref, Vector3::new(0.0, 0.0, 0.2), epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_speed_keeps_station() {
        let spec = TrajectorySpec { speed: 0.0, ..Default::default() };
        let r = make_reference(&spec, &SurfaceFrame::default(), &BodyParams::default()).unwrap();
        let p0 = r.at(spec.approach_time).pos_ref;
        for k in 0..=30 {
            let re = r.at(spec.approach_time + k as f64 * 0.5);
            assert_eq!(re.pos_ref, p0);
            assert_eq!(re.vel_ref, Vector3::zeros());
        }
    }

    #[test]
    fn reference_com_maps_to_tip() {
        let p = BodyParams::default();
        let f = SurfaceFrame::default().jittered(0.01, 0.05);
        let r = make_reference(&TrajectorySpec::default(), &f, &p).unwrap();
        let re = r.at(7.0);
        let tip = re.pos_ref + re.att_ref * p.lever_arm();
        assert_relative_eq!(tip, r.tip_at(7.0), epsilon = 1e-14);
        let local = f.to_local(&tip);
        assert_relative_eq!(local.z, -0.07, epsilon = 1e-14);
        assert_relative_eq!(re.att_ref * Vector3::x(), -f.normal, epsilon = 1e-14);
    }

    #[test]
    fn default_attitude_is_identity() {
        assert_relative_eq!(reference_attitude(&SurfaceFrame::default()).angle(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn reference_is_continuous() {
        let spec = TrajectorySpec::default();
        let r = make_reference(&spec, &SurfaceFrame::default(), &BodyParams::default()).unwrap();
        let eps = 1e-10;
        for &tb in &[2.0, spec.approach_time, spec.total_time()] {
            let (a, b) = (r.at(tb - eps), r.at(tb + eps));
            assert!((a.pos_ref - b.pos_ref).norm() < 1e-9);
            assert!((a.vel_ref - b.vel_ref).norm() < 1e-9 || tb == spec.total_time());
        }
        let dt = 1e-4;
        let mut t = 0.0;
        while t < spec.total_time() - dt {
            let fd = (r.at(t + dt).pos_ref - r.at(t).pos_ref) / dt;
            let mid = r.at(t + 0.5 * dt).vel_ref;
            assert!((fd - mid).norm() < 1e-6, "t {t}");
            t += 0.0137;
        }
    }

    #[test]
    fn phases() {
        let r = make_reference(&TrajectorySpec::default(), &SurfaceFrame::default(), &BodyParams::default()).unwrap();
        assert_eq!(r.phase(0.0), Phase::Approach);
        assert_eq!(r.phase(2.99), Phase::Approach);
        assert_eq!(r.phase(3.0), Phase::Sliding);
        assert_eq!(r.phase(18.0), Phase::Sliding);
        assert_eq!(r.phase(18.01), Phase::Done);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(ScenarioSpec::preset("moon"), Err(Error::Config(_))));
        for name in ScenarioSpec::PRESETS {
            ScenarioSpec::preset(name).unwrap().validate().unwrap();
        }
    }
}

//! Piecewise surfaces with spatially varying friction and height, and the
//! single-point penalty contact model.
//!
//! Surfaces are described in a local frame attached to the nominal plane:
//! arclength `s` along the sliding axis, lateral offset `b`, and height `d`
//! along the outward normal (pointing from the surface into free space).

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BodyParams, Frame, RobotState, Wrench};
use crate::error::{Error, Result};

/// Pose of the nominal surface plane in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFrame {
    pub origin: Vector3<f64>,
    /// Outward unit normal.
    pub normal: Vector3<f64>,
    /// Unit sliding direction, orthogonal to `normal`.
    pub slide: Vector3<f64>,
}

impl Default for SurfaceFrame {
    /// A vertical wall at `x = 0` facing `-x`, slid along world `+z`.
    fn default() -> Self {
        Self { origin: Vector3::zeros(), normal: -Vector3::x(), slide: Vector3::z() }
    }
}

impl SurfaceFrame {
    pub fn lateral(&self) -> Vector3<f64> {
        self.normal.cross(&self.slide)
    }

    /// `(s, b, d)` coordinates of a world point.
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let r = p - self.origin;
        Vector3::new(r.dot(&self.slide), r.dot(&self.lateral()), r.dot(&self.normal))
    }

    pub fn to_world(&self, s: f64, b: f64, d: f64) -> Vector3<f64> {
        self.origin + self.slide * s + self.lateral() * b + self.normal * d
    }

    /// Rotates the frame about its lateral axis and shifts it along its
    /// normal, modelling an imperfect surface map.
    pub fn jittered(&self, offset: f64, tilt: f64) -> SurfaceFrame {
        let rot = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(self.lateral()), tilt);
        SurfaceFrame {
            origin: self.origin + self.normal * offset,
            normal: rot * self.normal,
            slide: rot * self.slide,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub start_s: f64,
    pub end_s: f64,
    /// Offset along the outward normal (m).
    pub height: f64,
    pub mu: f64,
}

/// Smooth value-noise heightmap over the `(s, b)` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    pub seed: u64,
    pub cell_size: f64,
    pub amplitude: f64,
    s0: f64,
    b0: f64,
    ns: usize,
    nb: usize,
    nodes: Vec<f64>,
}

fn smoothstep(u: f64) -> (f64, f64) {
    (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u))
}

impl Heightmap {
    pub fn generate(seed: u64, cell_size: f64, amplitude: f64, s_range: (f64, f64), half_width: f64) -> Self {
        let ns = ((s_range.1 - s_range.0) / cell_size).ceil() as usize + 2;
        let nb = ((2.0 * half_width) / cell_size).ceil() as usize + 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = (0..ns * nb).map(|_| amplitude * rng.gen_range(-1.0..=1.0)).collect();
        Self { seed, cell_size, amplitude, s0: s_range.0, b0: -half_width, ns, nb, nodes }
    }

    fn node(&self, i: usize, j: usize) -> f64 {
        self.nodes[i.min(self.ns - 1) * self.nb + j.min(self.nb - 1)]
    }

    /// Height and its gradient `(∂h/∂s, ∂h/∂b)`.
    pub fn sample(&self, s: f64, b: f64) -> (f64, f64, f64) {
        let fs = ((s - self.s0) / self.cell_size).clamp(0.0, (self.ns - 1) as f64);
        let fb = ((b - self.b0) / self.cell_size).clamp(0.0, (self.nb - 1) as f64);
        let (i, j) = (fs.floor() as usize, fb.floor() as usize);
        let (us, dus) = smoothstep(fs - i as f64);
        let (ub, dub) = smoothstep(fb - j as f64);
        let (h00, h10, h01, h11) = (self.node(i, j), self.node(i + 1, j), self.node(i, j + 1), self.node(i + 1, j + 1));
        let a = h00 + (h10 - h00) * us;
        let c = h01 + (h11 - h01) * us;
        let h = a + (c - a) * ub;
        let dh_ds = ((h10 - h00) + ((h11 - h01) - (h10 - h00)) * ub) * dus / self.cell_size;
        let dh_db = (c - a) * dub / self.cell_size;
        (h, dh_ds, dh_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerrainMode {
    PatchList,
    ProceduralHeightmap { seed: u64, cell_size: f64, amplitude: f64 },
}

/// Contiguous sequence of patches, optionally overlaid with a procedural
/// heightmap. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub patches: Vec<Patch>,
    pub frame: SurfaceFrame,
    heightmap: Option<Heightmap>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub height: f64,
    pub mu: f64,
    /// Outward unit normal, world frame.
    pub normal: Vector3<f64>,
}

impl Terrain {
    pub fn new(patches: Vec<Patch>, frame: SurfaceFrame) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::InvalidParams("terrain needs at least one patch".into()));
        }
        for (i, p) in patches.iter().enumerate() {
            if !(p.end_s > p.start_s) {
                return Err(Error::InvalidParams(format!("patch {i} has end_s <= start_s")));
            }
            if !(p.mu >= 0.0) {
                return Err(Error::InvalidParams(format!("patch {i} has negative friction")));
            }
        }
        if patches.windows(2).any(|w| w[0].end_s != w[1].start_s) {
            return Err(Error::InvalidParams("patches are not contiguous".into()));
        }
        Ok(Self { patches, frame, heightmap: None })
    }

    /// Builds contiguous patches from `(length, height, mu)` triples.
    pub fn from_triples(start_s: f64, triples: &[(f64, f64, f64)], frame: SurfaceFrame) -> Result<Self> {
        let mut s = start_s;
        let patches = triples
            .iter()
            .map(|&(len, height, mu)| {
                let p = Patch { start_s: s, end_s: s + len, height, mu };
                s += len;
                p
            })
            .collect();
        Self::new(patches, frame)
    }

    pub fn with_heightmap(mut self, seed: u64, cell_size: f64, amplitude: f64) -> Result<Self> {
        if !(cell_size > 0.0) || !(amplitude >= 0.0) {
            return Err(Error::InvalidParams("heightmap needs cell_size > 0 and amplitude >= 0".into()));
        }
        self.heightmap = Some(Heightmap::generate(seed, cell_size, amplitude, self.span(), 0.5));
        Ok(self)
    }

    pub fn mode(&self) -> TerrainMode {
        match &self.heightmap {
            None => TerrainMode::PatchList,
            Some(h) => TerrainMode::ProceduralHeightmap { seed: h.seed, cell_size: h.cell_size, amplitude: h.amplitude },
        }
    }

    pub fn heightmap(&self) -> Option<&Heightmap> {
        self.heightmap.as_ref()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.patches[0].start_s, self.patches[self.patches.len() - 1].end_s)
    }

    fn patch_index(&self, s: f64) -> Option<usize> {
        let (start, end) = self.span();
        if !(s >= start && s <= end) {
            return None;
        }
        let idx = self.patches.partition_point(|p| p.end_s <= s);
        Some(idx.min(self.patches.len() - 1))
    }

    /// Surface height, friction and outward normal at arclength `s` on the
    /// centre line.
    pub fn query_surface(&self, s: f64) -> Result<SurfaceSample> {
        self.query_surface_at(s, 0.0)
    }

    pub fn query_surface_at(&self, s: f64, b: f64) -> Result<SurfaceSample> {
        let (start, end) = self.span();
        let i = self.patch_index(s).ok_or(Error::OutOfBounds { s, start, end })?;
        let p = &self.patches[i];
        let (height, normal) = match &self.heightmap {
            None => (p.height, self.frame.normal),
            Some(hm) => {
                let (h, hs, hb) = hm.sample(s, b);
                let n = self.frame.normal - self.frame.slide * hs - self.frame.lateral() * hb;
                (p.height + h, n.normalize())
            }
        };
        Ok(SurfaceSample { height, mu: p.mu, normal })
    }

    /// Penetration depth and outward contact normal of a point given in
    /// local `(s, b, d)` coordinates, or `None` when it is in free space.
    fn penetration(&self, local: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let (s, b, d) = (local.x, local.y, local.z);
        let i = self.patch_index(s)?;
        if let Some(hm) = &self.heightmap {
            let (h, hs, hb) = hm.sample(s, b);
            let h = h + self.patches[i].height;
            if d >= h {
                return None;
            }
            let n = (self.frame.normal - self.frame.slide * hs - self.frame.lateral() * hb).normalize();
            return Some(((h - d) * n.dot(&self.frame.normal), n));
        }

        // Signed distance to the union of patch boxes: exit through the top or
        // around the corner of a lower neighbour.
        let p = &self.patches[i];
        if d >= p.height {
            return None;
        }
        let mut best = (p.height - d, self.frame.normal);
        let mut consider = |ds: f64, dir: f64, neighbour: &Patch| {
            let dh = (neighbour.height - d).max(0.0);
            let dist = (ds * ds + dh * dh).sqrt();
            if dist < best.0 {
                let n = (self.frame.slide * (dir * ds) + self.frame.normal * dh) / dist;
                best = (dist, n);
            }
        };
        if i > 0 {
            consider(s - p.start_s, -1.0, &self.patches[i - 1]);
        }
        if i + 1 < self.patches.len() {
            consider(p.end_s - s, 1.0, &self.patches[i + 1]);
        }
        Some(best)
    }

    /// Height of the surface column under `local` and its separation.
    fn separation(&self, local: &Vector3<f64>) -> f64 {
        match self.query_surface_at(local.x, local.y) {
            Ok(sample) => (local.z - sample.height).max(0.0),
            Err(_) => local.z.max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactParams {
    /// Penalty stiffness (N/m).
    pub k_n: f64,
    /// Penalty damping (N s/m).
    pub c_n: f64,
    /// Friction regularization velocity (m/s).
    pub v_reg: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { k_n: 500.0, c_n: 50.0, v_reg: 0.01 }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_n > 0.0 && self.c_n >= 0.0 && self.v_reg > 0.0) {
            return Err(Error::InvalidParams("contact needs k_n > 0, c_n >= 0, v_reg > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactResult {
    pub in_contact: bool,
    /// World position of the contact point (the tip).
    pub p_c: Vector3<f64>,
    /// Outward contact normal, world frame.
    pub n_perp: Vector3<f64>,
    pub penetration: f64,
    pub f_perp: f64,
    /// Friction magnitude, applied along `friction_dir`.
    pub f_par: f64,
    /// Unit direction of the friction force (opposes tangential slip).
    pub friction_dir: Vector3<f64>,
    pub force_world: Vector3<f64>,
    /// Tip velocity component tangential to the contact plane.
    pub slip_velocity: Vector3<f64>,
    /// Body-frame force and torque about the center of mass.
    pub wrench_body: Wrench,
    pub mu: f64,
    /// Arclength of the tip along the sliding axis.
    pub s: f64,
    /// Tip distance above the surface along the normal, zero in contact.
    pub separation: f64,
}

impl ContactResult {
    fn free(p_c: Vector3<f64>, normal: Vector3<f64>, mu: f64, s: f64, separation: f64) -> Self {
        Self {
            in_contact: false,
            p_c,
            n_perp: normal,
            penetration: 0.0,
            f_perp: 0.0,
            f_par: 0.0,
            friction_dir: Vector3::zeros(),
            force_world: Vector3::zeros(),
            slip_velocity: Vector3::zeros(),
            wrench_body: Wrench::zero(Frame::Body),
            mu,
            s,
            separation,
        }
    }
}

/// Penalty normal force with tanh-regularized Coulomb friction at the
/// end-effector tip.
pub fn compute_contact(state: &RobotState, params: &BodyParams, terrain: &Terrain, cp: &ContactParams) -> ContactResult {
    let tip = state.tip_position(params);
    let local = terrain.frame.to_local(&tip);
    let mu = terrain.patch_index(local.x).map_or(0.0, |i| terrain.patches[i].mu);
    let Some((penetration, normal)) = terrain.penetration(&local) else {
        return ContactResult::free(tip, terrain.frame.normal, mu, local.x, terrain.separation(&local));
    };

    let v_tip = state.tip_velocity(params);
    let v_n = v_tip.dot(&normal);
    let f_perp = (cp.k_n * penetration - cp.c_n * v_n).max(0.0);
    let slip = v_tip - normal * v_n;
    let slip_speed = slip.norm();
    let (f_par, friction_dir) = if slip_speed > 0.0 && f_perp > 0.0 {
        (mu * f_perp * (slip_speed / cp.v_reg).tanh(), -slip / slip_speed)
    } else {
        (0.0, Vector3::zeros())
    };
    let force_world = normal * f_perp + friction_dir * f_par;
    let force_body = state.orientation.inverse_transform_vector(&force_world);
    let torque_body = params.lever_arm().cross(&force_body);
    ContactResult {
        in_contact: true,
        p_c: tip,
        n_perp: normal,
        penetration,
        f_perp,
        f_par,
        friction_dir,
        force_world,
        slip_velocity: slip,
        wrench_body: Wrench::new(force_body, torque_body, Frame::Body),
        mu,
        s: local.x,
        separation: 0.0,
    }
}

/// Human-readable terrain description used in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TerrainConfig {
    /// `(length_m, height_m, mu)` triples starting at `start_s`.
    Patches { start_s: f64, patches: Vec<(f64, f64, f64)> },
    Procedural {
        seed: u64,
        cell_size: f64,
        amplitude: f64,
        mu_set: Vec<f64>,
        /// Arclength over which friction stays constant (m).
        mu_span: f64,
        start_s: f64,
        length: f64,
    },
}

impl TerrainConfig {
    pub fn build(&self, frame: SurfaceFrame) -> Result<Terrain> {
        match self {
            TerrainConfig::Patches { start_s, patches } => Terrain::from_triples(*start_s, patches, frame),
            TerrainConfig::Procedural { seed, cell_size, amplitude, mu_set, mu_span, start_s, length } => {
                if mu_set.is_empty() || !(*mu_span > 0.0) || !(*length > 0.0) {
                    return Err(Error::InvalidParams("procedural terrain needs a friction set, mu_span and length".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
                let n = (length / mu_span).ceil() as usize;
                let triples: Vec<_> = (0..n)
                    .map(|k| {
                        let len = if k + 1 == n { length - mu_span * (n - 1) as f64 } else { *mu_span };
                        (len, 0.0, mu_set[rng.gen_range(0..mu_set.len())])
                    })
                    .collect();
                Terrain::from_triples(*start_s, &triples, frame)?.with_heightmap(*seed, *cell_size, *amplitude)
            }
        }
    }
}

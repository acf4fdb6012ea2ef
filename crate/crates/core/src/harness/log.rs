//! Control-rate episode logs and their CSV form.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{mix_seed, ControllerMode, Env, FaultKind, LogRow, SimConfig};
use crate::error::{Error, Result};
use crate::learning::rollout::{choose, Actor};

pub const EPISODE_LOG_TAG: &str = "#episode_log.v1";

/// Gain source for an evaluation episode.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Fixed gains from `gains.baseline_action`.
    Baseline,
    Variable(Actor<'a>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub seed: u64,
    pub rows: Vec<LogRow>,
    /// Set when the episode ended early; the rows stop at the faulting step.
    pub fault: Option<FaultKind>,
}

pub fn run_episode(sim: &SimConfig, controller: Controller<'_>, seed: u64) -> Result<EpisodeLog> {
    let mode = match controller {
        Controller::Baseline => ControllerMode::Baseline,
        Controller::Variable(_) => ControllerMode::Variable,
    };
    let mut env = Env::new(sim, mode, seed)?.with_log();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 4));
    let mut obs = env.reset()?;
    while !env.is_done() {
        let action = match controller {
            Controller::Baseline => sim.gains.baseline_action.clone(),
            Controller::Variable(actor) => choose(actor, &env, &obs, &mut rng)?.action,
        };
        obs = env.step(&action)?.obs;
    }
    Ok(EpisodeLog { seed, rows: env.take_log(), fault: env.fault() })
}

fn xyz(prefix: &str, unit: &str) -> [String; 3] {
    ["x", "y", "z"].map(|a| format!("{prefix}_{a}_{unit}"))
}

impl EpisodeLog {
    pub fn action_dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.action.len())
    }

    pub fn header(action_dim: usize) -> Vec<String> {
        let mut h = vec![EPISODE_LOG_TAG.to_string(), "t_s".into(), "sliding".into()];
        h.extend(xyz("pos", "m"));
        h.extend(["quat_w", "quat_x", "quat_y", "quat_z"].map(String::from));
        h.extend(xyz("vel", "mps"));
        h.extend(xyz("angvel", "radps"));
        h.extend(xyz("pos_ref", "m"));
        h.extend(xyz("err_pos", "m"));
        h.extend(xyz("err_att", "rad"));
        h.extend(xyz("err_vel", "mps"));
        h.extend(xyz("err_angvel", "radps"));
        h.extend(xyz("k_trans", "Npm"));
        h.extend(xyz("k_rot", "Nmprad"));
        h.extend((0..action_dim).map(|i| format!("action_{i}")));
        h.extend(xyz("force_true", "N"));
        h.extend(xyz("torque_true", "Nm"));
        h.extend(xyz("force_meas", "N"));
        h.extend(xyz("torque_meas", "Nm"));
        h.extend(["in_contact", "mu", "s_m", "penetration_m", "separation_m", "normal_slide", "normal_lateral", "normal_normal", "tilt_deg"].map(String::from));
        h.extend(["r_attitude", "r_position", "r_separation", "r_angular_rate", "r_smoothness"].map(String::from));
        h.extend((0..6).map(|i| format!("z_{i}")));
        h
    }

    fn record(r: &LogRow) -> Vec<String> {
        let mut v: Vec<f64> = vec![r.t, f64::from(u8::from(r.sliding))];
        v.extend(r.position.iter());
        let q = r.orientation.quaternion();
        v.extend([q.w, q.i, q.j, q.k]);
        v.extend(r.lin_vel.iter());
        v.extend(r.ang_vel.iter());
        v.extend(r.pos_ref.iter());
        v.extend(r.e_s.iter());
        v.extend(r.e_v.iter());
        v.extend(r.k.iter());
        v.extend(r.action.iter());
        v.extend(r.wrench_true.force.iter());
        v.extend(r.wrench_true.torque.iter());
        v.extend(r.wrench_meas.force.iter());
        v.extend(r.wrench_meas.torque.iter());
        v.extend([f64::from(u8::from(r.in_contact)), r.mu, r.s, r.penetration, r.separation]);
        v.extend(r.normal_local.iter());
        v.push(r.tilt_deg);
        v.extend(r.reward.as_array());
        v.extend(r.z.0);
        let mut out = vec!["sample".to_string()];
        out.extend(v.iter().map(|x| x.to_string()));
        out
    }

    /// Header line, one row per control step, then a `fault` marker row when
    /// the episode faulted.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let header = Self::header(self.action_dim());
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&header)?;
        for r in &self.rows {
            out.write_record(Self::record(r))?;
        }
        if let Some(kind) = self.fault {
            let mut row = vec![String::new(); header.len()];
            row[0] = format!("fault:{kind}");
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// A numeric CSV as named columns; non-numeric cells become NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let columns: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|c| c.trim().parse::<f64>().unwrap_or(f64::NAN)).collect());
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name).ok_or_else(|| Error::Config(format!("no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r.get(i).copied().unwrap_or(f64::NAN)).collect())
    }
}

//! Constant-gain grid against a learned policy on the same instances.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{mix_seed, SimConfig};
use crate::error::{Error, Result};
use crate::harness::log::{run_episode, Controller};
use crate::harness::metrics::{compute_metrics, mean_metrics, Metrics, MetricWindow};
use crate::learning::rollout::Actor;

pub const SWEEP_TAG: &str = "#gain_sweep.v1";
const LEVEL_NAMES: [&str; 3] = ["lo", "mid", "hi"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    /// Constant `(translational, angular)` action; `None` for the policy row.
    pub action: Option<(f64, f64)>,
    /// Mean over repeats.
    pub metrics: Metrics,
    pub faults: usize,
    pub repeats: usize,
}

/// Repeat seeds shared by every row, so all controllers see the same instances.
pub fn repeat_seeds(seed: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|r| mix_seed(seed, 0x4000 + r)).collect()
}

fn evaluate(sim: &SimConfig, controller: Controller<'_>, seed: u64, window: &MetricWindow) -> Result<Metrics> {
    compute_metrics(&run_episode(sim, controller, seed)?, window)
}

/// Nine rows for the `levels × levels` grid (translational outer, angular
/// inner), plus one row per labeled policy. Gains enter as the action on the
/// two adapted axes.
pub fn gain_sweep(
    sim: &SimConfig,
    levels: &[f64],
    repeats: usize,
    policies: &[(&str, Actor<'_>)],
    window: &MetricWindow,
    seed: u64,
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if levels.len() != 3 || sim.action_dim() != 2 {
        return Err(Error::Config("gain sweep needs three levels and a two-axis action".into()));
    }
    let seeds = repeat_seeds(seed, repeats);
    let mut jobs: Vec<(String, Option<(f64, f64)>, Option<Actor<'_>>)> = Vec::new();
    for (i, &t) in levels.iter().enumerate() {
        for (j, &a) in levels.iter().enumerate() {
            jobs.push((format!("trans_{}/ang_{}", LEVEL_NAMES[i], LEVEL_NAMES[j]), Some((t, a)), None));
        }
    }
    for (name, actor) in policies {
        jobs.push((name.to_string(), None, Some(*actor)));
    }
    let run = |job: &(String, Option<(f64, f64)>, Option<Actor<'_>>), s: u64| -> Result<Metrics> {
        match job {
            (_, Some((t, a)), _) => {
                let mut fixed = sim.clone();
                fixed.gains.baseline_action = vec![*t, *a];
                evaluate(&fixed, Controller::Baseline, s, window)
            }
            (_, None, Some(actor)) => evaluate(sim, Controller::Variable(*actor), s, window),
            _ => unreachable!(),
        }
    };
    let pairs: Vec<(usize, u64)> = (0..jobs.len()).flat_map(|j| seeds.iter().map(move |&s| (j, s))).collect();
    let results: Result<Vec<Metrics>> =
        if parallel { pairs.par_iter().map(|&(j, s)| run(&jobs[j], s)).collect() } else { pairs.iter().map(|&(j, s)| run(&jobs[j], s)).collect() };
    let results = results?;
    Ok(jobs
        .iter()
        .zip(results.chunks(repeats))
        .map(|(job, ms)| SweepRow { label: job.0.clone(), action: job.1, metrics: mean_metrics(ms), faults: ms.iter().filter(|m| m.fault).count(), repeats })
        .collect())
}

/// `a` is no worse on both errors and strictly better on one.
pub fn dominates(a: &Metrics, b: &Metrics) -> bool {
    let (a1, a2, b1, b2) = (a.rms_attitude_error, a.rms_position_error, b.rms_attitude_error, b.rms_position_error);
    a1 <= b1 && a2 <= b2 && (a1 < b1 || a2 < b2)
}

/// Scatter data: one line per row, errors first.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        SWEEP_TAG,
        "action_trans",
        "action_ang",
        "rms_attitude_error_rad",
        "rms_position_error_m",
        "rms_pitch_rate_radps",
        "mean_tilt_deg",
        "contact_loss_fraction",
        "faults",
        "repeats",
    ])?;
    for r in rows {
        let (t, a) = r.action.map_or((String::new(), String::new()), |(t, a)| (t.to_string(), a.to_string()));
        let m = &r.metrics;
        out.write_record([
            r.label.clone(),
            t,
            a,
            m.rms_attitude_error.to_string(),
            m.rms_position_error.to_string(),
            m.rms_pitch_rate.to_string(),
            m.mean_tilt_deg.to_string(),
            m.contact_loss_fraction.to_string(),
            r.faults.to_string(),
            r.repeats.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.scenario.trajectory.sliding_time = 1.0;
        cfg
    }

    #[test]
    fn grid_has_nine_rows_plus_policies() {
        let sim = short();
        let c = [0.6, 0.6];
        let rows = gain_sweep(&sim, &[0.25, 0.5, 0.999], 1, &[("const", Actor::Constant(&c))], &MetricWindow::Sliding, 1, false).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].label, "trans_lo/ang_lo");
        assert_eq!(rows[5].action, Some((0.5, 0.999)));
        assert_eq!(rows[9].label, "const");
        assert!(rows[9].action.is_none());
    }

    #[test]
    fn single_repeat_equals_single_run() {
        let sim = short();
        let rows = gain_sweep(&sim, &[0.25, 0.5, 0.999], 1, &[], &MetricWindow::Sliding, 4, false).unwrap();
        let mut fixed = sim.clone();
        fixed.gains.baseline_action = vec![0.25, 0.5];
        let direct = evaluate(&fixed, Controller::Baseline, repeat_seeds(4, 1)[0], &MetricWindow::Sliding).unwrap();
        assert_eq!(rows[1].metrics, direct);
    }

    #[test]
    fn constant_policy_matches_its_grid_cell() {
        // the approach phase holds the configured baseline action
        let mut sim = short();
        sim.gains.baseline_action = vec![0.5, 0.5];
        let c = [0.5, 0.5];
        let rows = gain_sweep(&sim, &[0.25, 0.5, 0.999], 2, &[("c", Actor::Constant(&c))], &MetricWindow::Sliding, 2, false).unwrap();
        assert_eq!(rows[4].metrics, rows[9].metrics);
    }

    #[test]
    fn parallel_matches_sequential() {
        let sim = short();
        let a = gain_sweep(&sim, &[0.25, 0.5, 0.999], 2, &[], &MetricWindow::Sliding, 3, false).unwrap();
        let b = gain_sweep(&sim, &[0.25, 0.5, 0.999], 2, &[], &MetricWindow::Sliding, 3, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dominance_is_strict() {
        let m = |a, p| Metrics { samples: 1, mean_tilt_deg: 0.0, rms_pitch_rate: 0.0, rms_position_error: p, rms_attitude_error: a, contact_loss_fraction: 0.0, fault: false };
        assert!(dominates(&m(1.0, 1.0), &m(1.0, 2.0)));
        assert!(!dominates(&m(1.0, 1.0), &m(1.0, 1.0)));
        assert!(!dominates(&m(0.5, 3.0), &m(1.0, 2.0)));
    }
}

//! Summary statistics of an episode log.

use serde::{Deserialize, Serialize};

use crate::env::LogRow;
use crate::error::{Error, Result};
use crate::harness::log::EpisodeLog;

/// Which sliding-phase samples enter the statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricWindow {
    Sliding,
    /// Episode time in `[start, end]` (s).
    Time { start: f64, end: f64 },
    /// Tip arclength in `[from, to]` (m).
    Arc { from: f64, to: f64 },
    /// `duration` seconds starting when the tip first reaches arclength `s`.
    AfterArc { s: f64, duration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub mean_tilt_deg: f64,
    /// Body-frame pitch rate (rad/s).
    pub rms_pitch_rate: f64,
    pub rms_position_error: f64,
    pub rms_attitude_error: f64,
    pub contact_loss_fraction: f64,
    pub fault: bool,
}

impl MetricWindow {
    fn select<'a>(&self, rows: &'a [LogRow]) -> Vec<&'a LogRow> {
        let sliding = rows.iter().filter(|r| r.sliding);
        match *self {
            MetricWindow::Sliding => sliding.collect(),
            MetricWindow::Time { start, end } => sliding.filter(|r| r.t >= start && r.t <= end).collect(),
            MetricWindow::Arc { from, to } => sliding.filter(|r| r.s >= from && r.s <= to).collect(),
            MetricWindow::AfterArc { s, duration } => {
                let rows: Vec<&LogRow> = sliding.collect();
                match rows.iter().find(|r| r.s >= s) {
                    Some(first) => {
                        let t0 = first.t;
                        rows.into_iter().filter(|r| r.t >= t0 && r.t <= t0 + duration).collect()
                    }
                    None => Vec::new(),
                }
            }
        }
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for v in values {
        acc += v * v;
        n += 1;
    }
    (acc / n.max(1) as f64).sqrt()
}

/// Fails with [`Error::EmptySlidingPhase`] when the window holds no
/// sliding-phase sample.
pub fn compute_metrics(log: &EpisodeLog, window: &MetricWindow) -> Result<Metrics> {
    let rows = window.select(&log.rows);
    if rows.is_empty() {
        return Err(Error::EmptySlidingPhase);
    }
    let n = rows.len() as f64;
    Ok(Metrics {
        samples: rows.len(),
        mean_tilt_deg: rows.iter().map(|r| r.tilt_deg).sum::<f64>() / n,
        rms_pitch_rate: rms(rows.iter().map(|r| r.ang_vel.y)),
        rms_position_error: rms(rows.iter().map(|r| r.e_s.fixed_rows::<3>(0).norm())),
        rms_attitude_error: rms(rows.iter().map(|r| r.e_s.fixed_rows::<3>(3).norm())),
        contact_loss_fraction: rows.iter().filter(|r| !r.in_contact).count() as f64 / n,
        fault: log.fault.is_some(),
    })
}

/// Component-wise mean; `fault` is set if any input faulted.
pub fn mean_metrics(ms: &[Metrics]) -> Metrics {
    let n = ms.len().max(1) as f64;
    let avg = |f: fn(&Metrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
    Metrics {
        samples: ms.iter().map(|m| m.samples).sum(),
        mean_tilt_deg: avg(|m| m.mean_tilt_deg),
        rms_pitch_rate: avg(|m| m.rms_pitch_rate),
        rms_position_error: avg(|m| m.rms_position_error),
        rms_attitude_error: avg(|m| m.rms_attitude_error),
        contact_loss_fraction: avg(|m| m.contact_loss_fraction),
        fault: ms.iter().any(|m| m.fault),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dynamics::{Frame, Wrench};
    use crate::learning::reward::RewardTerms;
    use crate::policy::FeatureVector;
    use nalgebra::{UnitQuaternion, Vector3, Vector6};
    use proptest::prelude::*;

    pub(crate) fn blank_row(t: f64) -> LogRow {
        LogRow {
            t,
            sliding: true,
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            lin_vel: Vector3::zeros(),
            ang_vel: Vector3::zeros(),
            pos_ref: Vector3::zeros(),
            e_s: Vector6::zeros(),
            e_v: Vector6::zeros(),
            k: Vector6::zeros(),
            action: vec![0.5, 0.5],
            wrench_true: Wrench::zero(Frame::World),
            wrench_meas: Wrench::zero(Frame::Body),
            in_contact: true,
            mu: 0.3,
            s: t * 0.1,
            penetration: 0.0,
            separation: 0.0,
            normal_local: Vector3::new(0.0, 0.0, 1.0),
            tilt_deg: 0.0,
            reward: RewardTerms::default(),
            z: FeatureVector([0.0; 6]),
        }
    }

    fn log_of(rows: Vec<LogRow>) -> EpisodeLog {
        EpisodeLog { seed: 0, rows, fault: None }
    }

    #[test]
    fn perfect_tracking_is_all_zero() {
        let log = log_of((0..100).map(|i| blank_row(i as f64 * 0.01)).collect());
        let m = compute_metrics(&log, &MetricWindow::Sliding).unwrap();
        assert_eq!((m.mean_tilt_deg, m.rms_pitch_rate, m.rms_position_error, m.rms_attitude_error, m.contact_loss_fraction), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(m.samples, 100);
    }

    #[test]
    fn constant_tilt_over_window() {
        let rows = (0..500)
            .map(|i| {
                let mut r = blank_row(i as f64 * 0.01);
                r.tilt_deg = if r.t >= 2.0 && r.t <= 3.0 { 5.0 } else { 40.0 };
                r
            })
            .collect();
        let m = compute_metrics(&log_of(rows), &MetricWindow::Time { start: 2.0, end: 3.0 }).unwrap();
        assert!((m.mean_tilt_deg - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sinusoidal_pitch_rate() {
        let a = 0.7;
        // whole periods: 2 Hz over 4 s at 1 kHz
        let rows = (0..4000)
            .map(|i| {
                let mut r = blank_row(i as f64 * 1e-3);
                r.ang_vel.y = a * (2.0 * std::f64::consts::PI * 2.0 * r.t).sin();
                r
            })
            .collect();
        let m = compute_metrics(&log_of(rows), &MetricWindow::Sliding).unwrap();
        assert!((m.rms_pitch_rate - a / 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn contact_loss_counts_sliding_samples_only() {
        let rows: Vec<LogRow> = (0..10)
            .map(|i| {
                let mut r = blank_row(i as f64);
                r.sliding = i >= 2;
                r.in_contact = i % 2 == 0;
                r
            })
            .collect();
        let m = compute_metrics(&log_of(rows), &MetricWindow::Sliding).unwrap();
        assert_eq!(m.samples, 8);
        assert!((m.contact_loss_fraction - 0.5).abs() < 1e-12);
    }

    #[test]
    fn after_arc_starts_at_first_crossing() {
        let rows = (0..100).map(|i| blank_row(i as f64 * 0.1)).collect();
        let m = compute_metrics(&log_of(rows), &MetricWindow::AfterArc { s: 0.5, duration: 1.0 }).unwrap();
        // t from 5.0 to 6.0 inclusive
        assert_eq!(m.samples, 11);
    }

    #[test]
    fn empty_sliding_phase_is_an_error() {
        let mut row = blank_row(0.0);
        row.sliding = false;
        assert!(matches!(compute_metrics(&log_of(vec![row]), &MetricWindow::Sliding), Err(Error::EmptySlidingPhase)));
        let rows = vec![blank_row(0.0)];
        assert!(matches!(compute_metrics(&log_of(rows), &MetricWindow::Arc { from: 5.0, to: 6.0 }), Err(Error::EmptySlidingPhase)));
    }

    proptest! {
        #[test]
        fn bounded_and_deterministic(tilts in proptest::collection::vec(0.0f64..90.0, 1..50), lost in proptest::collection::vec(any::<bool>(), 50)) {
            let rows: Vec<LogRow> = tilts.iter().enumerate().map(|(i, &t)| {
                let mut r = blank_row(i as f64);
                r.tilt_deg = t;
                r.in_contact = !lost[i];
                r
            }).collect();
            let log = log_of(rows);
            let m = compute_metrics(&log, &MetricWindow::Sliding).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.contact_loss_fraction));
            let max = tilts.iter().cloned().fold(0.0, f64::max);
            prop_assert!(m.mean_tilt_deg <= max + 1e-9);
            prop_assert_eq!(m, compute_metrics(&log, &MetricWindow::Sliding).unwrap());
        }
    }
}

//! The operations behind each CLI subcommand. Every output file is a pure
//! function of the run config, so re-runs reproduce them byte for byte.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::env::{mix_seed, SimConfig};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::harness::config::RunConfig;
use crate::harness::log::{run_episode, Controller, Table};
use crate::harness::metrics::{compute_metrics, mean_metrics, Metrics};
use crate::harness::plot::{line_plot, scatter_plot, Scale, Series};
use crate::harness::sweep::{gain_sweep, write_sweep_csv, SweepRow};
use crate::learning::rollout::{epoch_seeds, Actor, InputKind};
use crate::learning::teacher::{LearnedTeacher, TeacherKind, TeacherSpec};
use crate::learning::train::{curriculum, distill_pipeline, input_dim, input_statistics, rebalance_rewards, train_ppo, Agent, EpochStats, TrainOutcome};
use crate::scenarios::ScenarioSpec;

pub const TRAIN_LOG_TAG: &str = "#train_log.v1";
pub const METRICS_TAG: &str = "#metrics.v1";
pub const DISTILL_TAG: &str = "#distill.v1";

/// Epochs between periodic checkpoints during RL.
const CHECKPOINT_EVERY: usize = 50;

/// Streams per-epoch training statistics as CSV.
pub struct TrainLog<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> TrainLog<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            TRAIN_LOG_TAG,
            "epoch",
            "mean_return",
            "r_attitude",
            "r_position",
            "r_separation",
            "r_angular_rate",
            "r_smoothness",
            "kl",
            "clip_fraction",
            "fault_rate",
            "policy_loss",
            "value_loss",
            "entropy",
            "gain_violations",
            "samples",
        ])?;
        Ok(Self { out })
    }

    pub fn push(&mut self, s: &EpochStats) -> Result<()> {
        let mut row = vec![s.stage.clone(), s.epoch.to_string(), s.mean_return.to_string()];
        row.extend(s.terms.as_array().iter().map(f64::to_string));
        row.extend([s.kl, s.clip_fraction, s.fault_rate, s.policy_loss, s.value_loss, s.entropy].iter().map(f64::to_string));
        row.extend([s.gain_violations.to_string(), s.samples.to_string()]);
        self.out.write_record(&row)?;
        self.out.flush()?;
        Ok(())
    }
}

fn prepare(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml_string()?)?;
    Ok(cfg.out_dir.clone())
}

/// Reward weights rebalanced on fixed-gain episodes of `sim`.
fn balanced_sim(sim: &SimConfig, seed: u64, parallel: bool) -> Result<SimConfig> {
    let reward = rebalance_rewards(sim, &epoch_seeds(mix_seed(seed, 0x6000), 0, 4), parallel)?;
    Ok(SimConfig { reward, ..sim.clone() })
}

/// Runs PPO with a CSV log and a checkpoint every few epochs (and at the end).
fn rl_with_logging(
    out: &Path,
    name: &str,
    sim: &SimConfig,
    run: impl FnOnce(&mut dyn FnMut(&EpochStats, &Agent) -> Result<()>) -> Result<TrainOutcome>,
) -> Result<TrainOutcome> {
    let mut log = TrainLog::new(File::create(out.join(format!("{name}.csv")))?)?;
    let ckpt_path = out.join(format!("{name}.json"));
    let reward = sim.reward.clone();
    let mut hook = |s: &EpochStats, agent: &Agent| -> Result<()> {
        log.push(s)?;
        if s.epoch % CHECKPOINT_EVERY == 0 {
            save_checkpoint(&Checkpoint::from_agent(&s.stage, agent, Some(reward.clone())), &ckpt_path)?;
        }
        Ok(())
    };
    let outcome = run(&mut hook)?;
    let label = outcome.history.last().map_or(name.to_string(), |h| h.stage.clone());
    save_checkpoint(&Checkpoint::from_agent(&label, &outcome.agent, Some(sim.reward.clone())), &ckpt_path)?;
    Ok(outcome)
}

/// PPO on privileged observations; writes `teacher.csv` and `teacher.json`.
pub fn train_teacher(cfg: &RunConfig) -> Result<TrainOutcome> {
    let out = prepare(cfg)?;
    let sim = balanced_sim(&cfg.sim, cfg.seed, cfg.parallel)?;
    let input = InputKind::Privileged;
    let norm = input_statistics(&sim, input, &sim.gains.baseline_action, &epoch_seeds(mix_seed(cfg.seed, 0x6001), 0, 2))?;
    let agent = Agent::new(input, input_dim(&sim, input), sim.action_dim(), norm, &cfg.train.net, cfg.seed);
    rl_with_logging(&out, "teacher", &sim, |hook| train_ppo(&sim, agent, &cfg.train, cfg.seed, &cfg.preset, cfg.parallel, hook))
}

/// The handcrafted teacher, or a learned one from a privileged checkpoint.
pub fn teacher_from(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<TeacherSpec> {
    let axes = cfg.sim.gains.adapted_axes.clone();
    match checkpoint {
        None => Ok(TeacherSpec::handcrafted(cfg.teacher.clone(), axes)),
        Some(p) => {
            let ck = load_checkpoint(p)?;
            if ck.input != InputKind::Privileged {
                return Err(Error::Config(format!("{} is not a privileged teacher", p.display())));
            }
            Ok(TeacherSpec {
                kind: TeacherKind::LearnedPrivileged,
                handcrafted: cfg.teacher.clone(),
                learned: Some(LearnedTeacher { net: ck.actor, normalizer: ck.normalizer }),
                adapted_axes: axes,
            })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistillSummary {
    pub train_mse: f64,
    pub heldout_mse: f64,
    pub samples: usize,
    pub trace_max_deviation: f64,
}

/// Supervised student from teacher rollouts; writes `distill.csv` and `student.json`.
pub fn distill(cfg: &RunConfig, teacher_checkpoint: Option<&Path>) -> Result<DistillSummary> {
    let out = prepare(cfg)?;
    let teacher = teacher_from(cfg, teacher_checkpoint)?;
    let d = distill_pipeline(&cfg.sim, &teacher, &cfg.distill, &cfg.train.net, cfg.seed, cfg.parallel)?;
    let summary = DistillSummary { train_mse: d.report.train_mse, heldout_mse: d.report.heldout_mse, samples: d.report.samples, trace_max_deviation: d.trace_max_deviation };
    let mut w = csv::Writer::from_path(out.join("distill.csv"))?;
    w.write_record([DISTILL_TAG, "train_mse", "heldout_mse", "samples", "trace_max_deviation"])?;
    w.write_record(["student".to_string(), summary.train_mse.to_string(), summary.heldout_mse.to_string(), summary.samples.to_string(), summary.trace_max_deviation.to_string()])?;
    w.flush()?;
    save_checkpoint(&Checkpoint::new("distill", InputKind::Student, d.net, None, d.normalizer, None), &out.join("student.json"))?;
    Ok(summary)
}

/// Curriculum PPO from a student checkpoint; writes `finetune.csv` and `finetune.json`.
pub fn finetune(cfg: &RunConfig, checkpoint: &Path) -> Result<TrainOutcome> {
    let out = prepare(cfg)?;
    let agent = load_checkpoint(checkpoint)?.into_agent(&cfg.train.net, cfg.seed);
    let sim = balanced_sim(&cfg.sim, cfg.seed, cfg.parallel)?;
    let stages: Vec<(String, ScenarioSpec, usize)> =
        cfg.curriculum.stages.iter().map(|s| Ok((s.name.clone(), ScenarioSpec::preset(&s.scenario)?, s.epochs))).collect::<Result<_>>()?;
    rl_with_logging(&out, "finetune", &sim, |hook| curriculum(&sim, agent, &stages, &cfg.train, cfg.seed, cfg.parallel, hook))
}

/// Seeds of the evaluation episodes of a run.
pub fn eval_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64).map(|i| mix_seed(seed, 0x5000 + i)).collect()
}

fn policy_actor(ck: &Checkpoint, deterministic: bool) -> Actor<'_> {
    match (deterministic, &ck.critic) {
        (false, Some(value)) => Actor::Explore { net: &ck.actor, value, normalizer: &ck.normalizer, input: ck.input },
        _ => Actor::Deterministic { net: &ck.actor, normalizer: &ck.normalizer, input: ck.input },
    }
}

fn write_metrics_csv(path: &Path, rows: &[(String, Metrics)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([METRICS_TAG, "samples", "mean_tilt_deg", "rms_pitch_rate_radps", "rms_position_error_m", "rms_attitude_error_rad", "contact_loss_fraction", "fault"])?;
    for (label, m) in rows {
        w.write_record([
            label.clone(),
            m.samples.to_string(),
            m.mean_tilt_deg.to_string(),
            m.rms_pitch_rate.to_string(),
            m.rms_position_error.to_string(),
            m.rms_attitude_error.to_string(),
            m.contact_loss_fraction.to_string(),
            u8::from(m.fault).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluation episodes with the baseline (no checkpoint) or a policy. Writes
/// `episode_<i>.csv` per episode and `metrics.csv` with a closing mean row.
/// `deterministic` evaluates the mean action instead of sampling.
pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, deterministic: bool) -> Result<Vec<Metrics>> {
    let out = prepare(cfg)?;
    let ck = checkpoint.map(load_checkpoint).transpose()?;
    let controller = match &ck {
        None => Controller::Baseline,
        Some(c) => Controller::Variable(policy_actor(c, deterministic)),
    };
    let seeds = eval_seeds(cfg.seed, cfg.eval.episodes);
    let run = |&s: &u64| run_episode(&cfg.sim, controller, s);
    let logs: Vec<_> = if cfg.parallel {
        use rayon::prelude::*;
        seeds.par_iter().map(run).collect::<Result<_>>()?
    } else {
        seeds.iter().map(run).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for (i, log) in logs.iter().enumerate() {
        log.save(&out.join(format!("episode_{i}.csv")))?;
        let m = compute_metrics(log, &cfg.eval.window)?;
        rows.push((format!("episode_{i}"), m));
        all.push(m);
    }
    rows.push(("mean".into(), mean_metrics(&all)));
    write_metrics_csv(&out.join("metrics.csv"), &rows)?;
    Ok(all)
}

/// Constant-gain grid plus an optional policy row; writes `sweep.csv` and `sweep.svg`.
pub fn sweep(cfg: &RunConfig, checkpoint: Option<&Path>, deterministic: bool) -> Result<Vec<SweepRow>> {
    let out = prepare(cfg)?;
    let ck = checkpoint.map(load_checkpoint).transpose()?;
    let policies: Vec<(&str, Actor<'_>)> = ck.iter().map(|c| ("policy", policy_actor(c, deterministic))).collect();
    let rows = gain_sweep(&cfg.sim, &cfg.sweep.levels, cfg.sweep.repeats, &policies, &cfg.eval.window, cfg.seed, cfg.parallel)?;
    write_sweep_csv(&rows, File::create(out.join("sweep.csv"))?)?;
    let series: Vec<Series> =
        rows.iter().map(|r| Series { name: r.label.clone(), points: vec![(r.metrics.rms_attitude_error, r.metrics.rms_position_error)] }).collect();
    std::fs::write(out.join("sweep.svg"), scatter_plot("gain sweep", "rms attitude error (rad)", "rms position error (m)", &series, Scale::Log10))?;
    Ok(rows)
}

/// SVG of `y_columns` against `x_column` from any CSV written by this crate.
pub fn plot(csv_path: &Path, x_column: &str, y_columns: &[String], scatter: bool, out: &Path) -> Result<()> {
    let table = Table::read(csv_path)?;
    let x = table.column(x_column)?;
    let series = y_columns
        .iter()
        .map(|c| Ok(Series { name: c.clone(), points: x.iter().copied().zip(table.column(c)?).collect() }))
        .collect::<Result<Vec<_>>>()?;
    let title = csv_path.file_name().map_or(String::new(), |f| f.to_string_lossy().into_owned());
    let svg = if scatter { scatter_plot(&title, x_column, &y_columns.join(", "), &series, Scale::Linear) } else { line_plot(&title, x_column, &y_columns.join(", "), &series) };
    std::fs::write(out, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.out_dir = dir.to_path_buf();
        cfg.sim.scenario.trajectory.sliding_time = 0.5;
        cfg.eval.episodes = 2;
        cfg
    }

    #[test]
    fn eval_writes_logs_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let ms = eval(&cfg, None, true).unwrap();
        assert_eq!(ms.len(), 2);
        for f in ["config.toml", "episode_0.csv", "episode_1.csv", "metrics.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(text.starts_with("#metrics.v1,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn train_log_rows() {
        let mut buf = Vec::new();
        {
            let mut log = TrainLog::new(&mut buf).unwrap();
            let s = EpochStats {
                stage: "flat6".into(),
                epoch: 3,
                mean_return: -1.5,
                terms: Default::default(),
                kl: 0.01,
                clip_fraction: 0.1,
                fault_rate: 0.0,
                policy_loss: 0.2,
                value_loss: 0.3,
                entropy: -0.4,
                gain_violations: 0,
                samples: 10,
            };
            log.push(&s).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("#train_log.v1,epoch,mean_return"));
        assert!(lines[1].starts_with("flat6,3,-1.5,"));
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
    }

    #[test]
    fn plot_reads_written_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        eval(&cfg, None, true).unwrap();
        let svg = dir.path().join("p.svg");
        plot(&dir.path().join("episode_0.csv"), "t_s", &["tilt_deg".into(), "k_rot_y_Nmprad".into()], false, &svg).unwrap();
        assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));
        assert!(plot(&dir.path().join("episode_0.csv"), "t_s", &["missing".into()], false, &svg).is_err());
    }
}

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use slide_core::harness::commands;
use slide_core::harness::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "slide", version, about = "Variable-impedance sliding: train, distill, evaluate, sweep")]
struct Cli {
    /// TOML run config layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scenario preset: flat6, wsw, step1cm, step2cm, rock.
    #[arg(long, global = true)]
    scenario: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = ControllerArg::Baseline)]
    controller: ControllerArg,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Worker threads for independent episodes; 1 runs sequentially.
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
    /// Evaluate the policy's mean action instead of sampling.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ControllerArg {
    Baseline,
    Policy,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// PPO on privileged observations.
    TrainTeacher,
    /// Supervised student from the handcrafted teacher, or from --checkpoint.
    Distill,
    /// Curriculum PPO starting from --checkpoint.
    Finetune,
    /// Evaluation episodes with per-episode logs and metrics.
    Eval,
    /// Constant-gain grid, plus the policy when --controller policy.
    Sweep,
    /// SVG from a CSV written by any other command.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "t_s")]
        x: String,
        #[arg(long, required = true, num_args = 1..)]
        y: Vec<String>,
        #[arg(long)]
        scatter: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), self.scenario.as_deref())
            .with_context(|| format!("loading config {}", self.config.as_ref().map_or("<defaults>".into(), |p| p.display().to_string())))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(n) = self.parallel {
            cfg.parallel = n > 1;
        }
        Ok(cfg)
    }

    fn policy_checkpoint(&self) -> Result<Option<PathBuf>> {
        match (self.controller, &self.checkpoint) {
            (ControllerArg::Baseline, _) => Ok(None),
            (ControllerArg::Policy, Some(p)) => Ok(Some(p.clone())),
            (ControllerArg::Policy, None) => bail!("--controller policy needs --checkpoint"),
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::Plot { input, x, y, scatter, output } = &cli.command {
        commands::plot(input, x, y, *scatter, output)?;
        println!("wrote {}", output.display());
        return Ok(());
    }
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::TrainTeacher => {
            let out = commands::train_teacher(&cfg)?;
            let last = out.history.last().map_or(f64::NAN, |h| h.mean_return);
            println!("teacher: {} epochs, final mean return {last:.4}, diverged {}", out.history.len(), out.diverged);
        }
        Command::Distill => {
            let s = commands::distill(&cfg, cli.checkpoint.as_deref())?;
            println!("student: held-out mse {:.3e}, trace max deviation {:.4}, {} samples", s.heldout_mse, s.trace_max_deviation, s.samples);
        }
        Command::Finetune => {
            let ckpt = cli.checkpoint.as_deref().context("finetune needs --checkpoint")?;
            let out = commands::finetune(&cfg, ckpt)?;
            let last = out.history.last().map_or(f64::NAN, |h| h.mean_return);
            println!("finetune: {} epochs, final mean return {last:.4}, stopped early {}", out.history.len(), out.stopped_early);
        }
        Command::Eval => {
            let ms = commands::eval(&cfg, cli.policy_checkpoint()?.as_deref(), cli.deterministic)?;
            for (i, m) in ms.iter().enumerate() {
                println!(
                    "episode {i}: tilt {:.3} deg, rms pitch rate {:.4}, rms pos {:.4}, rms att {:.4}, fault {}",
                    m.mean_tilt_deg, m.rms_pitch_rate, m.rms_position_error, m.rms_attitude_error, m.fault
                );
            }
        }
        Command::Sweep => {
            for r in commands::sweep(&cfg, cli.policy_checkpoint()?.as_deref(), cli.deterministic)? {
                println!("{:<18} att {:.4e} pos {:.4e} pitch rate {:.4} faults {}/{}", r.label, r.metrics.rms_attitude_error, r.metrics.rms_position_error, r.metrics.rms_pitch_rate, r.faults, r.repeats);
            }
        }
        Command::Plot { .. } => unreachable!(),
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.parallel {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| run(&cli))
        }
        _ => run(&cli),
    }
}

//! Configuration, episode logs, metrics, checkpoints, sweeps and plots: the
//! pieces the command-line tool is assembled from.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod log;
pub mod metrics;
pub mod plot;
pub mod sweep;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::RunConfig;
pub use log::{run_episode, Controller, EpisodeLog};
pub use metrics::{compute_metrics, Metrics, MetricWindow};
pub use sweep::{gain_sweep, SweepRow};

//! Experiment orchestration: configuration, step-size tuning, sweeps,
//! demonstrations and the CLI.

pub mod cli;
pub mod config;
pub mod demos;
pub mod output;
pub mod sweep;
pub mod tune;

pub use cli::run_cli;
pub use config::ExperimentConfig;
pub use demos::{greedy_demo, sameclass_demo, GreedyDemoSetup, GreedyReport, SameclassReport, SameclassSetup};
pub use sweep::{sweep_two_level, SweepResult, SweepRow, SweepSetup};
pub use tune::{default_lr_grid, tune_lr, TuneResult};

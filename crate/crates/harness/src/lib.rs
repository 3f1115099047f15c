//! Experiment harness: configs, runs, sweeps, the verdict table, and CSV,
//! JSON and SVG outputs.

pub mod config;
pub mod dqn;
pub mod efficiency;
pub mod error;
pub mod experiment;
pub mod output;
pub mod svg;
pub mod sweep;
pub mod verdicts;

pub use config::{ExperimentConfig, MeterSettings, NetConfig, Setting};
pub use efficiency::{training_efficiency, Efficiency};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RunRecord};
pub use dqn::{run_dqn, DqnReport, DqnSeedReport};
pub use output::{emit_outputs, emit_verdicts, plot_dir, Summary};
pub use sweep::{run_sweep, SweepResult};
pub use verdicts::{run_verdict_suite, VerdictReport, VerdictSuiteConfig};

//! Measuring forgetting as predictive inconsistency.
//!
//! A learner and an environment interact through [`process`]; [`futures`]
//! simulates the learner's induced futures against a hybrid environment, and
//! [`meter`] estimates the k-step propensity to forget with cloned particles.

pub mod envs;
pub mod error;
pub mod futures;
pub mod learners;
pub mod meter;
pub mod predictive;
pub mod process;
pub mod rng;

pub use error::{Error, Result};
pub use futures::{probe_predictives, rollout, rollout_with, EvalProbe, FuturesRollout, HybridEnvironment, RolloutMode};
pub use meter::{
    calibrate_tau, check_consistency, estimate_gamma, estimate_gamma_curve, mixture_predictive, reference_and_mixture, sweep_k,
    Direction, ForgettingConfig, ForgettingEstimate, MixturePolicy, TauCalibration, Verdict,
};
pub use predictive::{divergence, Bandwidth, DivergenceKind, PredictiveDistribution};
pub use process::{
    run_interaction, run_interaction_with, step_interaction, Environment, History, InteractionTrace, Interface,
    Learner, Observation, Output, SnapshotSchedule, StepMetrics, Target,
};
pub use rng::{SeedTree, StreamRng};

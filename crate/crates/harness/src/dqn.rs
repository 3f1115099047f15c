//! Multi-seed DQN runs with a per-seed instability report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Setting};
use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnSeedReport {
    pub seed: u64,
    pub complete: bool,
    /// Mean greedy-policy return over all evaluations.
    pub mean_return: Option<f64>,
    pub final_return: Option<f64>,
    pub mean_td_loss: Option<f64>,
    pub mean_gamma: Option<f64>,
    /// Coefficient of variation of the Γ trace at the largest k.
    pub gamma_cv: Option<f64>,
    pub checkpoints: usize,
    /// Fraction of checkpoints whose window touches a target synchronisation.
    pub near_sync_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnReport {
    pub k: usize,
    pub seeds: Vec<DqnSeedReport>,
    pub records: Vec<RunRecord>,
}

pub fn seed_report(record: &RunRecord, k: usize) -> DqnSeedReport {
    let rows: Vec<_> = record.gamma.iter().filter(|g| g.k == k).collect();
    let losses: Vec<f64> = record.steps.iter().filter_map(|s| s.train_loss).collect();
    DqnSeedReport {
        seed: record.seed,
        complete: record.complete,
        mean_return: record.mean_return(),
        final_return: record.evaluations.last().map(|e| e.mean_return),
        mean_td_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
        mean_gamma: record.mean_gamma(k),
        gamma_cv: record.gamma_cv(k),
        checkpoints: rows.len(),
        near_sync_fraction: if rows.is_empty() { 0.0 } else { rows.iter().filter(|g| g.near_sync).count() as f64 / rows.len() as f64 },
    }
}

/// Run `cfg` (a DQN setting) on every seed in parallel.
pub fn run_dqn(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<DqnReport> {
    if !matches!(cfg.setting, Setting::Dqn { .. }) {
        return Err(HarnessError::Config(format!("{} is not a dqn config", cfg.name)));
    }
    if seeds.is_empty() {
        return Err(HarnessError::Config("dqn needs at least one seed".into()));
    }
    let records = seeds.par_iter().map(|&s| run_experiment(cfg, s)).collect::<Result<Vec<_>>>()?;
    let k = cfg.meter.max_k();
    Ok(DqnReport { k, seeds: records.iter().map(|r| seed_report(r, k)).collect(), records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MeterSettings;
    use forgetmeter::envs::CartpoleParams;
    use forgetmeter::learners::dqn::DqnConfig;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            name: "dqn".into(),
            setting: Setting::Dqn {
                learner: DqnConfig { total_timesteps: 300, learning_starts: 50, buffer_size: 200, batch_size: 16, target_network_frequency: 50, ..Default::default() },
                cartpole: CartpoleParams::default(),
                eval_every: 100,
                eval_steps: 50,
                probe_states: 5,
            },
            meter: MeterSettings { ks: vec![5], num_particles: 8, every: Some(100), ..Default::default() },
            seeds: vec![0],
            total_steps: None,
            grid_panels: None,
        }
    }

    #[test]
    fn report_covers_every_seed() {
        let r = run_dqn(&tiny(), &[0, 1]).unwrap();
        assert_eq!(r.seeds.len(), 2);
        for s in &r.seeds {
            assert!(s.complete);
            assert_eq!(s.checkpoints, 3);
            assert!(s.final_return.unwrap() > 0.0);
            assert!(s.mean_td_loss.is_some());
            assert!((0.0..=1.0).contains(&s.near_sync_fraction));
        }
    }

    #[test]
    fn rejects_supervised_configs() {
        let mut c = tiny();
        c.setting = Setting::Degenerate { env: Default::default() };
        assert!(matches!(run_dqn(&c, &[0]), Err(HarnessError::Config(_))));
    }
}

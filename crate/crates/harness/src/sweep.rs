//! One-axis parameter sweeps: a run per (value, seed), aggregated per value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub value: f64,
    /// Mean over seeds of the time-averaged Γ at the largest k.
    pub mean_gamma: Option<f64>,
    pub std_gamma: Option<f64>,
    pub mean_efficiency: Option<f64>,
    pub std_efficiency: Option<f64>,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Records in (value, seed) order.
    pub records: Vec<(f64, RunRecord)>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepResult {
    /// Value with the largest mean efficiency.
    pub fn efficiency_argmax(&self) -> Option<f64> {
        argmax(self.aggregates.iter().filter_map(|a| a.mean_efficiency.map(|e| (a.value, e))))
    }

    /// Value with the largest mean Γ̄.
    pub fn gamma_argmax(&self) -> Option<f64> {
        argmax(self.aggregates.iter().filter_map(|a| a.mean_gamma.map(|g| (a.value, g))))
    }
}

fn argmax(it: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    it.fold(None, |best: Option<(f64, f64)>, (v, m)| match best {
        Some((_, bm)) if bm >= m => best,
        _ => Some((v, m)),
    })
    .map(|(v, _)| v)
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

fn get_path<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(doc, |cur, part| match cur {
        Value::Object(map) => map.get(part),
        Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

/// Configs of each sweep value, named `<name>-<axis>=<value>`.
pub fn sweep_configs(cfg: &ExperimentConfig, axis: &str, values: &[f64]) -> Result<Vec<ExperimentConfig>> {
    if values.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one value".into()));
    }
    let doc = serde_json::to_value(cfg).expect("config serializes");
    match get_path(&doc, axis) {
        Some(Value::Number(_)) => {}
        Some(other) => return Err(HarnessError::Config(format!("axis {axis} is not numeric: {other}"))),
        None => return Err(HarnessError::Config(format!("no field {axis}"))),
    }
    values
        .iter()
        .map(|&v| {
            let number = if v.fract() == 0.0 && v.abs() < 1e15 { Value::from(v as i64) } else { Value::from(v) };
            let mut c = cfg.with_override(axis, number)?;
            c.name = format!("{}-{}={}", cfg.name, axis.rsplit('.').next().unwrap_or(axis), v);
            Ok(c)
        })
        .collect()
}

/// Run every (value, seed) cell in parallel. Cells that fail at runtime are
/// kept as incomplete records and counted in the aggregates.
pub fn run_sweep(cfg: &ExperimentConfig, axis: &str, values: &[f64], seeds: &[u64]) -> Result<SweepResult> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one seed".into()));
    }
    let configs = sweep_configs(cfg, axis, values)?;
    let cells: Vec<(usize, u64)> = (0..values.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let records =
        cells.par_iter().map(|&(i, s)| run_experiment(&configs[i], s).map(|r| (values[i], r))).collect::<Result<Vec<_>>>()?;
    let k = cfg.meter.max_k();
    let aggregates = values
        .iter()
        .map(|&v| {
            let runs: Vec<&RunRecord> = records.iter().filter(|(x, _)| *x == v).map(|(_, r)| r).collect();
            let ok: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.complete).collect();
            let gammas: Vec<f64> = ok.iter().filter_map(|r| r.mean_gamma(k)).collect();
            let effs: Vec<f64> = ok.iter().filter_map(|r| r.efficiency.map(|e| e.value)).collect();
            let (mean_gamma, std_gamma) = mean_std(&gammas);
            let (mean_efficiency, std_efficiency) = mean_std(&effs);
            SweepAggregate {
                value: v,
                mean_gamma,
                std_gamma,
                mean_efficiency,
                std_efficiency,
                runs: runs.len(),
                failed: runs.len() - ok.len(),
            }
        })
        .collect();
    Ok(SweepResult { axis: axis.to_string(), values: values.to_vec(), seeds: seeds.to_vec(), records, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MeterSettings, Setting};
    use forgetmeter::envs::SinusoidConfig;

    fn flat() -> ExperimentConfig {
        ExperimentConfig {
            name: "flat".into(),
            setting: Setting::Degenerate { env: SinusoidConfig { epochs: 2, ..Default::default() } },
            meter: MeterSettings { num_particles: 4, ks: vec![1, 2], ..Default::default() },
            seeds: vec![0],
            total_steps: None,
            grid_panels: None,
        }
    }

    #[test]
    fn sweep_has_one_record_per_cell_and_aggregates_per_value() {
        let r = run_sweep(&flat(), "setting.env.batch_size", &[5.0, 10.0], &[0, 1]).unwrap();
        assert_eq!(r.records.len(), 4);
        assert_eq!(r.aggregates.len(), 2);
        assert_eq!(r.records[0].1.name, "flat-batch_size=5");
        assert_eq!(r.records[0].1.total_steps, 16);
        assert_eq!(r.records[2].1.total_steps, 8);
        for a in &r.aggregates {
            assert_eq!((a.runs, a.failed), (2, 0));
            assert_eq!(a.mean_gamma, Some(0.0));
            assert_eq!(a.std_gamma, Some(0.0));
        }
    }

    #[test]
    fn non_numeric_or_missing_axes_are_config_errors() {
        assert!(matches!(run_sweep(&flat(), "name", &[1.0], &[0]), Err(HarnessError::Config(_))));
        assert!(matches!(run_sweep(&flat(), "setting.nope", &[1.0], &[0]), Err(HarnessError::Config(_))));
        assert!(matches!(run_sweep(&flat(), "setting.env.batch_size", &[], &[0]), Err(HarnessError::Config(_))));
    }

    #[test]
    fn argmax_and_moments() {
        assert_eq!(argmax([(1.0, 2.0), (2.0, 5.0), (3.0, 1.0)].into_iter()), Some(2.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }
}

//! Persistence: long-format metrics, summaries, per-run JSON and plots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dqn::DqnSeedReport;
use crate::error::{HarnessError, Result};
use crate::experiment::{GridPanels, RunRecord};
use crate::svg::{grid_panels_svg, LinePlot};
use crate::sweep::SweepAggregate;
use crate::verdicts::VerdictReport;

/// Column set of `metrics.csv`.
pub const METRICS_COLUMNS: [&str; 5] = ["run_id", "seed", "step", "metric", "value"];

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub complete: bool,
    pub error: Option<String>,
    pub total_steps: usize,
    /// Time-averaged Γ per k.
    pub mean_gamma: BTreeMap<usize, f64>,
    pub efficiency: Option<f64>,
    pub efficiency_infinite: bool,
    pub mean_return: Option<f64>,
}

impl RunSummary {
    pub fn of(r: &RunRecord) -> Self {
        let ks: Vec<usize> = r.gamma.iter().map(|g| g.k).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        Self {
            run_id: r.run_id.clone(),
            seed: r.seed,
            config_hash: r.config_hash.clone(),
            complete: r.complete,
            error: r.error.clone(),
            total_steps: r.total_steps,
            mean_gamma: ks.into_iter().filter_map(|k| r.mean_gamma(k).map(|g| (k, g))).collect(),
            efficiency: r.efficiency.map(|e| e.value),
            efficiency_infinite: r.efficiency.is_some_and(|e| e.infinite),
            mean_return: r.mean_return(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: String,
    pub aggregates: Vec<SweepAggregate>,
}

/// Verdict counts and overall outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub all_pass: bool,
    /// `(scenario, name, passed, total)`.
    pub scenarios: Vec<(usize, String, usize, usize)>,
}

impl VerdictSummary {
    pub fn of(r: &VerdictReport) -> Self {
        Self { all_pass: r.all_pass(), scenarios: r.by_scenario() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Summary {
    pub command: String,
    pub config: Option<ExperimentConfig>,
    pub config_hash: Option<String>,
    pub runs: Vec<RunSummary>,
    pub sweep: Option<SweepSummary>,
    pub dqn: Option<Vec<DqnSeedReport>>,
    pub verdicts: Option<VerdictSummary>,
}

impl Summary {
    pub fn new(command: &str, config: Option<&ExperimentConfig>, records: &[RunRecord]) -> Self {
        Self {
            command: command.into(),
            config: config.cloned(),
            config_hash: config.map(|c| c.hash()),
            runs: records.iter().map(RunSummary::of).collect(),
            ..Default::default()
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Output(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))
}

/// Write every metric point of every record; returns the number of data rows.
pub fn write_metrics(path: &Path, records: &[RunRecord]) -> Result<usize> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| HarnessError::Output(format!("{}: {e}", path.display()));
    w.write_record(METRICS_COLUMNS).map_err(err)?;
    let mut rows = 0;
    for r in records {
        for p in r.metric_points() {
            w.write_record([r.run_id.clone(), r.seed.to_string(), p.step.to_string(), p.metric, p.value.to_string()]).map_err(err)?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| HarnessError::Output(e.to_string()))?.clone();
    if headers.iter().ne(METRICS_COLUMNS) {
        return Err(HarnessError::Output(format!("{}: unexpected columns {headers:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| HarnessError::Output(format!("{}: {e}", path.display())))).collect()
}

pub fn grid_file(run_id: &str) -> String {
    format!("grid_{run_id}.json")
}

/// Write `metrics.csv`, `summary.json`, per-run records and grids, then the
/// plots. Returns the paths written.
pub fn emit_outputs(out: &Path, records: &[RunRecord], summary: &Summary) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(HarnessError::Precondition("no run records to write".into()));
    }
    create_dir(out)?;
    let mut written = Vec::new();
    let metrics = out.join(METRICS_FILE);
    write_metrics(&metrics, records)?;
    written.push(metrics);
    let summary_path = out.join(SUMMARY_FILE);
    write_json(&summary_path, summary)?;
    written.push(summary_path);
    let runs = out.join("runs");
    create_dir(&runs)?;
    for r in records {
        let p = runs.join(format!("{}.json", r.run_id));
        write_json(&p, r)?;
        written.push(p);
        if let Some(g) = &r.grid {
            let p = out.join(grid_file(&r.run_id));
            write_json(&p, g)?;
            written.push(p);
        }
    }
    written.extend(plot_dir(out)?);
    Ok(written)
}

/// Write the verdict table as CSV plus `summary.json`.
pub fn emit_verdicts(out: &Path, report: &VerdictReport) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let table = out.join("verdicts.csv");
    let mut w = csv::Writer::from_path(&table).map_err(|e| HarnessError::Output(e.to_string()))?;
    for row in &report.rows {
        w.serialize(row).map_err(|e| HarnessError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::io(&table, e))?;
    let calibration = out.join("calibration.json");
    write_json(&calibration, &report.calibration)?;
    let summary_path = out.join(SUMMARY_FILE);
    let summary = Summary { command: "verdicts".into(), verdicts: Some(VerdictSummary::of(report)), ..Default::default() };
    write_json(&summary_path, &summary)?;
    Ok(vec![table, calibration, summary_path])
}

/// Run group of a row: the run id without its seed suffix.
fn group_of(row: &MetricRow) -> String {
    row.run_id.strip_suffix(&format!("-s{}", row.seed)).unwrap_or(&row.run_id).to_string()
}

/// Mean over seeds of `metric` per step, for each group.
fn seed_means(rows: &[MetricRow], metric: &str) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        let e = acc.entry(group_of(r)).or_default().entry(r.step).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    acc.into_iter().map(|(g, m)| (g, m.into_iter().map(|(s, (v, n))| (s as f64, v / n as f64)).collect())).collect()
}

fn gamma_ks(rows: &[MetricRow]) -> Vec<usize> {
    let ks: std::collections::BTreeSet<usize> =
        rows.iter().filter_map(|r| r.metric.strip_prefix("gamma_k").and_then(|k| k.parse().ok())).collect();
    ks.into_iter().collect()
}

fn save(out: &Path, name: &str, svg: String, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = out.join(name);
    write_text(&p, &svg)?;
    written.push(p);
    Ok(())
}

/// Regenerate every plot from the files in `dir`.
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    let summary: Option<Summary> = dir.join(SUMMARY_FILE).exists().then(|| read_json(&dir.join(SUMMARY_FILE))).transpose()?;
    let mut written = Vec::new();
    let ks = gamma_ks(&rows);
    let groups: std::collections::BTreeSet<String> = rows.iter().map(group_of).collect();
    if let Some(&kmax) = ks.last() {
        let mut step_plot = LinePlot::new("Propensity to forget over training", "step", "Γ_k");
        let shown: Vec<usize> = if groups.len() == 1 { ks.clone() } else { vec![kmax] };
        for &k in &shown {
            for (g, pts) in seed_means(&rows, &format!("gamma_k{k}")) {
                let name = if groups.len() == 1 { format!("k={k}") } else { format!("{g} k={k}") };
                step_plot.series.push(crate::svg::Series { name, points: pts });
            }
        }
        save(dir, "gamma_vs_step.svg", step_plot.render(), &mut written)?;

        let mut k_plot = LinePlot::new("Time-averaged propensity to forget", "k", "mean Γ_k");
        k_plot.markers = true;
        let mut per_group: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for &k in &ks {
            for (g, pts) in seed_means(&rows, &format!("gamma_k{k}")) {
                let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len().max(1) as f64;
                per_group.entry(g).or_default().push((k as f64, mean));
            }
        }
        for (g, pts) in per_group {
            k_plot.series.push(crate::svg::Series { name: g, points: pts });
        }
        save(dir, "gamma_vs_k.svg", k_plot.render(), &mut written)?;
    }
    let returns = seed_means(&rows, "eval_return");
    if !returns.is_empty() {
        let mut p = LinePlot::new("Greedy evaluation return", "step", "mean return");
        for (g, pts) in returns {
            p.series.push(crate::svg::Series { name: g, points: pts });
        }
        save(dir, "return_vs_step.svg", p.render(), &mut written)?;
    }
    if let Some(sweep) = summary.as_ref().and_then(|s| s.sweep.as_ref()) {
        let axis = sweep.axis.rsplit('.').next().unwrap_or(&sweep.axis).to_string();
        let eff: Vec<(f64, f64)> = sweep.aggregates.iter().filter_map(|a| a.mean_efficiency.map(|e| (a.value, e))).collect();
        let gam: Vec<(f64, f64)> = sweep.aggregates.iter().filter_map(|a| a.mean_gamma.map(|g| (a.value, g))).collect();
        let mut p = LinePlot::new(&format!("Training efficiency vs {axis}"), &axis, "efficiency").with_series("efficiency", eff);
        p.markers = true;
        save(dir, &format!("efficiency_vs_{axis}.svg"), p.render(), &mut written)?;
        let mut p = LinePlot::new(&format!("Mean propensity to forget vs {axis}"), &axis, "mean Γ").with_series("mean Γ", gam);
        p.markers = true;
        save(dir, &format!("gamma_vs_{axis}.svg"), p.render(), &mut written)?;
    }
    let mut grids: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("grid_") && n.ends_with(".json")))
        .collect();
    grids.sort();
    for path in grids {
        let g: GridPanels = read_json(&path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("grid").to_string();
        save(dir, &format!("{stem}.svg"), grid_panels_svg(&g, &format!("Decision surface, t={}", g.time)), &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_strip_the_seed_suffix() {
        let row = MetricRow { run_id: "reg-momentum=0.9-s3".into(), seed: 3, step: 0, metric: "x".into(), value: 0.0 };
        assert_eq!(group_of(&row), "reg-momentum=0.9");
    }

    #[test]
    fn empty_record_list_is_a_precondition_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_outputs(dir.path(), &[], &Summary::default()).unwrap_err();
        assert!(matches!(err, HarnessError::Precondition(_)));
    }
}

use std::path::{Path, PathBuf};
use std::process::Command;

use forgetmeter_harness::output::{read_metrics, METRICS_COLUMNS};
use forgetmeter_harness::{ExperimentConfig, RunRecord, Summary};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_forgetmeter"));
    c.env("FORGETMETER_THREADS", "2");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const FLAT: &str = r#"{"name":"flat","setting":{"kind":"degenerate","env":{"epochs":3}},"meter":{"ks":[1,4],"num_particles":8}}"#;

const MOONS: &str = r#"{"name":"moons","setting":{"kind":"classification","env":{"epochs":4},
  "learner":{"hidden_dim":6,"optimizer":{"kind":"adam","lr":0.1}}},"meter":{"ks":[1,3],"num_particles":6,"num_probes":5},"grid_panels":5}"#;

const FLOW: &str = r#"{"name":"flow","setting":{"kind":"generative",
  "env":{"num_samples":200,"num_heldout":50,"batch_size":100,"epochs":3},
  "learner":{"hidden_dim":8,"num_integration_steps":5,"output_batch":10,"num_probe_samples":20}},
  "meter":{"ks":[1,2],"num_particles":4}}"#;

fn code(c: &mut Command) -> i32 {
    c.status().unwrap().code().unwrap()
}

#[test]
fn run_writes_metrics_summary_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flat.json", FLAT);
    let out = dir.path().join("out");
    assert_eq!(code(bin().args(["run", "--config"]).arg(&cfg).args(["--seed", "3", "--out"]).arg(&out)), 0);
    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    let record: RunRecord = serde_json::from_str(&std::fs::read_to_string(out.join("runs/flat-s3.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), record.metric_points().len());
    assert!(rows.iter().all(|r| r.run_id == "flat-s3" && r.seed == 3));
    let header = std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, METRICS_COLUMNS.join(","));
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.command, "run");
    assert_eq!(summary.config.as_ref().map(|c| c.hash()), summary.config_hash);
    assert_eq!(summary.runs[0].mean_gamma.get(&4), Some(&0.0));
    assert!(out.join("gamma_vs_step.svg").exists() && out.join("gamma_vs_k.svg").exists());
}

#[test]
fn classification_run_emits_grid_panels_and_plot_regenerates_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "moons.json", MOONS);
    let out = dir.path().join("out");
    assert_eq!(code(bin().args(["run", "--config"]).arg(&cfg).args(["--seed", "0", "--out"]).arg(&out)), 0);
    let svg = out.join("grid_moons-s0.svg");
    let first = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(first.matches("<!-- data: reference").count(), 25);
    std::fs::remove_file(&svg).unwrap();
    assert_eq!(code(bin().args(["plot", "--from"]).arg(&out)), 0);
    assert_eq!(std::fs::read_to_string(&svg).unwrap(), first);
}

#[test]
fn generative_run_completes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", FLOW);
    let out = dir.path().join("out");
    assert_eq!(code(bin().args(["run", "--config"]).arg(&cfg).args(["--seed", "1", "--out"]).arg(&out)), 0);
    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    assert!(rows.iter().any(|r| r.metric == "val_metric" && r.value.is_finite()));
    assert!(rows.iter().any(|r| r.metric == "gamma_k2" && r.value > 0.0));
}

#[test]
fn sweep_writes_aggregates_and_efficiency_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flat.json", FLAT);
    let out = dir.path().join("sweep");
    let status = code(
        bin().args(["sweep", "--config"]).arg(&cfg).args(["--axis", "setting.env.batch_size", "--values", "5,10", "--seeds", "0,1", "--out"]).arg(&out),
    );
    assert_eq!(status, 0);
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let sweep = summary.sweep.unwrap();
    assert_eq!(sweep.aggregates.len(), 2);
    assert_eq!(summary.runs.len(), 4);
    assert!(out.join("efficiency_vs_batch_size.svg").exists());
    let runs: std::collections::BTreeSet<String> = read_metrics(&out.join("metrics.csv")).unwrap().into_iter().map(|r| r.run_id).collect();
    assert_eq!(runs.len(), 4);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"name":"x","setting":{"kind":"degenerate"},"seeds":[]}"#);
    let out = dir.path().join("o");
    assert_eq!(code(bin().args(["run", "--config"]).arg(&bad).args(["--seed", "0", "--out"]).arg(&out)), 1);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(bin().args(["run", "--config"]).arg(&missing).args(["--seed", "0", "--out"]).arg(&out)), 1);
    let flat = write(dir.path(), "flat.json", FLAT);
    assert_eq!(code(bin().args(["sweep", "--config"]).arg(&flat).args(["--axis", "name", "--values", "1", "--seeds", "0", "--out"]).arg(&out)), 1);
    assert_eq!(code(bin().args(["dqn", "--config"]).arg(&flat).args(["--seeds", "0", "--out"]).arg(&out)), 1);
    assert_eq!(code(bin().arg("frobnicate")), 1);
    assert_eq!(code(bin().args(["run", "--config"]).arg(&flat).args(["--seed", "0", "--out"]).arg(&out).env("FORGETMETER_THREADS", "zero")), 1);
}

#[test]
fn plotting_an_empty_directory_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(bin().args(["plot", "--from"]).arg(dir.path())), 2);
}

#[test]
fn verdicts_write_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let status = code(bin().args(["verdicts", "--particles", "50", "--seeds", "0", "--out"]).arg(&out));
    assert!(status == 0 || status == 3, "exit code {status}");
    let table = std::fs::read_to_string(out.join("verdicts.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 13 * 3);
    assert!(out.join("summary.json").exists() && out.join("calibration.json").exists());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        n += 1;
    }
    assert!(n >= 9);
}

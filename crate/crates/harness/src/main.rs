use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forgetmeter_harness::output::{SweepSummary, VerdictSummary};
use forgetmeter_harness::{
    emit_outputs, emit_verdicts, plot_dir, run_dqn, run_experiment, run_sweep, run_verdict_suite, ExperimentConfig,
    HarnessError, Result, Summary, VerdictSuiteConfig,
};

#[derive(Debug, Parser)]
#[command(name = "forgetmeter", about = "Measure the propensity to forget of learners in interaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one seed of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one numeric config field over values and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path of the field, e.g. setting.learner.optimizer.momentum.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the thought-experiment verdict table; exits with 3 on any mismatch.
    Verdicts {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Run a DQN config over seeds with the instability report.
    Dqn {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the plots of an output directory.
    Plot {
        #[arg(long)]
        from: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("FORGETMETER_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| HarnessError::Config(format!("FORGETMETER_THREADS={v} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    Ok(())
}

fn report_written(out: &Path, n: usize) {
    println!("wrote {n} files to {}", out.display());
}

fn incomplete(records: &[forgetmeter_harness::RunRecord]) -> bool {
    records.iter().any(|r| !r.complete)
}

fn execute(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let record = run_experiment(&cfg, seed)?;
            let records = vec![record];
            let files = emit_outputs(&out, &records, &Summary::new("run", Some(&cfg), &records))?;
            report_written(&out, files.len());
            if let Some(e) = &records[0].error {
                eprintln!("run incomplete: {e}");
            }
            Ok(if incomplete(&records) { 2 } else { 0 })
        }
        Command::Sweep { config, axis, values, seeds, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = run_sweep(&cfg, &axis, &values, &seeds)?;
            let records: Vec<_> = result.records.iter().map(|(_, r)| r.clone()).collect();
            let mut summary = Summary::new("sweep", Some(&cfg), &records);
            summary.sweep = Some(SweepSummary { axis: axis.clone(), aggregates: result.aggregates.clone() });
            let files = emit_outputs(&out, &records, &summary)?;
            for a in &result.aggregates {
                println!(
                    "{axis}={}: mean Γ {:?}, efficiency {:?}, failed {}/{}",
                    a.value, a.mean_gamma, a.mean_efficiency, a.failed, a.runs
                );
            }
            report_written(&out, files.len());
            Ok(if incomplete(&records) { 2 } else { 0 })
        }
        Command::Verdicts { out, particles, seeds } => {
            let mut cfg = VerdictSuiteConfig::default();
            if let Some(m) = particles {
                cfg.num_particles = m;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            let report = run_verdict_suite(&cfg)?;
            let files = emit_verdicts(&out, &report)?;
            for (n, name, pass, total) in VerdictSummary::of(&report).scenarios {
                println!("scenario {n:>2} {name:<32} {pass}/{total}");
            }
            report_written(&out, files.len());
            Ok(if report.all_pass() { 0 } else { 3 })
        }
        Command::Dqn { config, seeds, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_dqn(&cfg, &seeds)?;
            let mut summary = Summary::new("dqn", Some(&cfg), &report.records);
            summary.dqn = Some(report.seeds.clone());
            let files = emit_outputs(&out, &report.records, &summary)?;
            for s in &report.seeds {
                println!("seed {}: mean return {:?}, Γ cv {:?}, near-sync {:.2}", s.seed, s.mean_return, s.gamma_cv, s.near_sync_fraction);
            }
            report_written(&out, files.len());
            Ok(if incomplete(&report.records) { 2 } else { 0 })
        }
        Command::Plot { from } => {
            let files = plot_dir(&from)?;
            report_written(&from, files.len());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

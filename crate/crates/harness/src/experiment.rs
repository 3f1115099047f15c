//! A single run: the interaction process with per-step metrics and the
//! propensity to forget measured on a schedule.

use std::collections::BTreeSet;

use forgetmeter::envs::cartpole::cartpole_reset;
use forgetmeter::envs::{cartpole_step, sinusoid_env, two_moons_env, CartpoleEnv, GenerativeEnv, SupervisedEnv};
use forgetmeter::learners::dqn::{rl_probe, Dqn};
use forgetmeter::learners::flow::FlowLearner;
use forgetmeter::learners::supervised::{MlpLearner, MlpLearnerConfig, SupervisedHead};
use forgetmeter::learners::thought::Degenerate;
use forgetmeter::predictive::{median_heuristic_bandwidth, mmd2_rbf};
use forgetmeter::{
    estimate_gamma_curve, reference_and_mixture, run_interaction_with, Environment, EvalProbe, ForgettingConfig,
    History, Learner, Observation, PredictiveDistribution, SeedTree, SnapshotSchedule, Target,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, NetConfig, Setting};
use crate::efficiency::{training_efficiency, Efficiency};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub time: usize,
    /// Loss reported by the learner for its latest update.
    pub train_loss: Option<f64>,
    /// Loss on the full training set of the current task.
    pub task_loss: Option<f64>,
    pub val_metric: Option<f64>,
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub time: usize,
    pub k: usize,
    pub gamma: f64,
    pub std_error: f64,
    pub infinite: bool,
    pub dropped: usize,
    /// The k-step window touches a target-network synchronisation.
    pub near_sync: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub time: usize,
    pub mean_return: f64,
}

/// Class-1 probabilities on a regular grid: the live predictive and the
/// mixture after `k` self-consistent updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPanels {
    pub time: usize,
    pub k: usize,
    pub resolution: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub reference: Vec<f64>,
    pub mixture: Vec<f64>,
    pub train_points: Vec<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub name: String,
    pub setting: String,
    pub config_hash: String,
    pub seed: u64,
    pub total_steps: usize,
    pub steps: Vec<StepRow>,
    pub gamma: Vec<GammaRow>,
    pub evaluations: Vec<EvalRow>,
    pub efficiency: Option<Efficiency>,
    /// First steps of each new task.
    pub boundaries: Vec<usize>,
    pub grid: Option<GridPanels>,
    pub complete: bool,
    pub error: Option<String>,
}

/// One `(step, metric, value)` point of the long-format metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

impl RunRecord {
    /// `(t, Γ_k(t))` in time order.
    pub fn gamma_trace(&self, k: usize) -> Vec<(usize, f64)> {
        self.gamma.iter().filter(|g| g.k == k).map(|g| (g.time, g.gamma)).collect()
    }

    /// Mean of the `Γ_k` trace.
    pub fn mean_gamma(&self, k: usize) -> Option<f64> {
        let v: Vec<f64> = self.gamma_trace(k).into_iter().map(|(_, g)| g).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Coefficient of variation (sample std / mean) of the `Γ_k` trace.
    pub fn gamma_cv(&self, k: usize) -> Option<f64> {
        let v: Vec<f64> = self.gamma_trace(k).into_iter().map(|(_, g)| g).collect();
        coefficient_of_variation(&v)
    }

    pub fn mean_return(&self) -> Option<f64> {
        let v = &self.evaluations;
        (!v.is_empty()).then(|| v.iter().map(|e| e.mean_return).sum::<f64>() / v.len() as f64)
    }

    pub fn metric_points(&self) -> Vec<MetricPoint> {
        let mut out = Vec::new();
        let mut push = |step: usize, metric: String, value: f64| out.push(MetricPoint { step, metric, value });
        for s in &self.steps {
            let fields = [("train_loss", s.train_loss), ("task_loss", s.task_loss), ("val_metric", s.val_metric), ("reward", s.reward)];
            for (name, v) in fields {
                if let Some(v) = v {
                    push(s.time, name.to_string(), v);
                }
            }
        }
        for g in &self.gamma {
            push(g.time, format!("gamma_k{}", g.k), g.gamma);
            push(g.time, format!("gamma_se_k{}", g.k), g.std_error);
            if g.near_sync {
                push(g.time, format!("near_sync_k{}", g.k), 1.0);
            }
        }
        for e in &self.evaluations {
            push(e.time, "eval_return".to_string(), e.mean_return);
        }
        if let Some(e) = self.efficiency {
            push(self.total_steps, "efficiency".to_string(), e.value);
        }
        out
    }
}

pub fn coefficient_of_variation(v: &[f64]) -> Option<f64> {
    if v.len() < 2 || v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean > 0.0).then(|| var.sqrt() / mean)
}

/// Instrumentation of one setting.
struct Hooks<'a, S> {
    task_loss: Box<dyn Fn(usize, &S) -> Option<f64> + Sync + 'a>,
    val_metric: Box<dyn Fn(usize, &S) -> Option<f64> + Sync + 'a>,
    near_sync: Box<dyn Fn(&S, usize) -> bool + Sync + 'a>,
    evaluate: Box<dyn Fn(usize, &S) -> forgetmeter::Result<Option<f64>> + Sync + 'a>,
}

impl<'a, S> Hooks<'a, S> {
    fn new(task_loss: impl Fn(usize, &S) -> Option<f64> + Sync + 'a) -> Self {
        Self {
            task_loss: Box::new(task_loss),
            val_metric: Box::new(|_, _| None),
            near_sync: Box::new(|_, _| false),
            evaluate: Box::new(|_, _| Ok(None)),
        }
    }
}

pub fn run_id(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}-s{seed}", cfg.name)
}

fn empty_record(cfg: &ExperimentConfig, seed: u64, total_steps: usize) -> RunRecord {
    RunRecord {
        run_id: run_id(cfg, seed),
        name: cfg.name.clone(),
        setting: cfg.setting.name().to_string(),
        config_hash: cfg.hash(),
        seed,
        total_steps,
        steps: Vec::new(),
        gamma: Vec::new(),
        evaluations: Vec::new(),
        efficiency: None,
        boundaries: Vec::new(),
        grid: None,
        complete: false,
        error: None,
    }
}

/// Run the interaction with instrumentation, filling `record`.
fn drive<E: Environment, L: Learner>(
    cfg: &ExperimentConfig,
    seed: u64,
    env: &E,
    learner: &L,
    probes: &EvalProbe,
    hooks: &Hooks<'_, L::State>,
    record: &mut RunRecord,
) -> forgetmeter::Result<(L::State, History)> {
    let total = record.total_steps;
    let schedule: BTreeSet<usize> = cfg.meter.schedule(total).into_iter().collect();
    let fcfg = ForgettingConfig {
        bootstrap_resamples: cfg.meter.bootstrap_resamples,
        max_dropped_fraction: cfg.meter.max_dropped_fraction,
        ..ForgettingConfig::new(cfg.meter.max_k().max(1), cfg.meter.num_particles.max(1), cfg.divergence())
    };
    let root = SeedTree::new(seed);
    let mut final_history = None;
    let trace = run_interaction_with(env, learner, total, &SnapshotSchedule::none(), &root.child("run", 0), |t, state, history| {
        let metrics_loss = if t == 0 { None } else { learner.step_loss(state) };
        let reward = match history.last_observation()? {
            Observation::RlSignal { reward, .. } if t > 0 => *reward,
            _ => None,
        };
        record.steps.push(StepRow {
            time: t,
            train_loss: metrics_loss,
            task_loss: (hooks.task_loss)(t, state),
            val_metric: (hooks.val_metric)(t, state),
            reward,
        });
        if let Some(r) = (hooks.evaluate)(t, state)? {
            record.evaluations.push(EvalRow { time: t, mean_return: r });
        }
        if schedule.contains(&t) {
            let curve = estimate_gamma_curve(learner, env, state, history, probes, &fcfg, &cfg.meter.ks, &root.child("meter", t as u64))?;
            for e in curve {
                record.gamma.push(GammaRow {
                    time: t,
                    k: e.k,
                    gamma: e.gamma,
                    std_error: e.std_error,
                    infinite: e.is_infinite(),
                    dropped: e.dropped_particles,
                    near_sync: (hooks.near_sync)(state, e.k),
                });
            }
        }
        if t == total {
            final_history = Some(history.clone());
        }
        Ok(())
    })?;
    Ok((trace.final_state, final_history.unwrap_or(trace.history)))
}

fn finish_efficiency(record: &mut RunRecord) {
    let curve: Vec<(f64, f64)> =
        record.steps.iter().filter_map(|s| s.task_loss.or(s.train_loss).map(|l| (s.time as f64, l))).collect();
    record.efficiency = training_efficiency(&curve).ok();
}

pub fn mlp_learner(env: &SupervisedEnv, net: &NetConfig, head: SupervisedHead) -> forgetmeter::Result<MlpLearner> {
    let validation = if head == SupervisedHead::Regression { env.validation_pairs() } else { Vec::new() };
    MlpLearner::new(
        MlpLearnerConfig {
            input_dim: env.input_dim,
            hidden_dim: net.hidden_dim,
            head,
            optimizer: net.optimizer,
            initial_noise_var: net.initial_noise_var,
        },
        validation,
    )
}

fn validation_probes(env: &SupervisedEnv, n: usize) -> forgetmeter::Result<EvalProbe> {
    let inputs: Vec<Vec<f64>> = env.validation.iter().take(n).map(|(x, _)| x.clone()).collect();
    EvalProbe::from_inputs(&inputs)
}

/// Lower/upper corners of the two-moons decision-surface grid.
pub const GRID_X: (f64, f64) = (-1.5, 2.5);
pub const GRID_Y: (f64, f64) = (-1.0, 1.5);

pub fn grid_inputs(resolution: usize) -> Vec<Vec<f64>> {
    let r = resolution.max(2);
    let at = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / (r - 1) as f64;
    (0..r).flat_map(|j| (0..r).map(move |i| vec![at(GRID_X, i), at(GRID_Y, j)])).collect()
}

fn class_one(d: &PredictiveDistribution) -> f64 {
    match d {
        PredictiveDistribution::Categorical(p) if p.len() > 1 => p[1],
        _ => f64::NAN,
    }
}

/// Execute one seed of `cfg`. Runtime failures yield an incomplete record.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let mut record = empty_record(cfg, seed, 0);
    if let Err(e) = run_setting(cfg, seed, &mut record) {
        record.error = Some(e.to_string());
        record.complete = false;
    } else {
        record.complete = true;
    }
    finish_efficiency(&mut record);
    Ok(record)
}

fn run_setting(cfg: &ExperimentConfig, seed: u64, record: &mut RunRecord) -> forgetmeter::Result<()> {
    match &cfg.setting {
        Setting::Regression { env, learner } => {
            let env = sinusoid_env(env, seed)?;
            let learner = mlp_learner(&env, learner, SupervisedHead::Regression)?;
            record.total_steps = cfg.total_steps.unwrap_or(env.total_steps());
            let val: Vec<(Vec<f64>, Target)> = env.validation.clone();
            let mut hooks = Hooks::new(|t, s| learner.evaluate_loss(s, env.training_set(t)));
            hooks.val_metric = Box::new(|_, s| learner.evaluate_loss(s, &val));
            let probes = validation_probes(&env, cfg.meter.num_probes)?;
            drive(cfg, seed, &env, &learner, &probes, &hooks, record)?;
        }
        Setting::Classification { env, learner } => {
            let env = two_moons_env(env, seed)?;
            let learner = mlp_learner(&env, learner, SupervisedHead::Classification { classes: 2 })?;
            record.total_steps = cfg.total_steps.unwrap_or(env.total_steps());
            record.boundaries = env.boundary_steps();
            let val: Vec<(Vec<f64>, Target)> = env.validation.clone();
            let mut hooks = Hooks::new(|t, s| learner.evaluate_loss(s, env.training_set(t)));
            hooks.val_metric = Box::new(|_, s| learner.evaluate_loss(s, &val));
            let probes = validation_probes(&env, cfg.meter.num_probes)?;
            let (state, history) = drive(cfg, seed, &env, &learner, &probes, &hooks, record)?;
            if let Some(res) = cfg.grid_panels {
                let grid = EvalProbe::from_inputs(&grid_inputs(res))?;
                let k = cfg.meter.max_k().max(1);
                let seeds = SeedTree::new(seed).child("grid", 0);
                let (reference, mixture) =
                    reference_and_mixture(&learner, &env, &state, &history, &grid, k, cfg.meter.num_particles, &seeds)?;
                let t = history.time();
                record.grid = Some(GridPanels {
                    time: t,
                    k,
                    resolution: res.max(2),
                    x_range: GRID_X,
                    y_range: GRID_Y,
                    reference: reference.iter().map(class_one).collect(),
                    mixture: mixture.iter().map(class_one).collect(),
                    train_points: env
                        .training_set(t)
                        .iter()
                        .map(|(x, c)| (x[0], x[1], c.as_real() as usize))
                        .collect(),
                });
            }
        }
        Setting::Generative { env, learner } => {
            let env = GenerativeEnv::new(env, seed)?;
            let learner = FlowLearner::new(learner.clone())?;
            record.total_steps = cfg.total_steps.unwrap_or(env.total_steps());
            let total = record.total_steps;
            let schedule: BTreeSet<usize> = cfg.meter.cadence(total).into_iter().collect();
            let bandwidth = median_heuristic_bandwidth(&env.heldout)?;
            let mut hooks = Hooks::new(|t, s| if t == 0 { None } else { learner.step_loss(s) });
            hooks.val_metric = Box::new(|t, s| {
                if t != total && !schedule.contains(&t) {
                    return None;
                }
                let obs = Observation::GenSample { samples: Vec::new() };
                match learner.predict(s, &obs).ok()?.pop()? {
                    PredictiveDistribution::Empirical(gen) => mmd2_rbf(&gen, &env.heldout, bandwidth).ok(),
                    _ => None,
                }
            });
            let probes = EvalProbe::new(vec![Observation::GenSample { samples: Vec::new() }])?;
            drive(cfg, seed, &env, &learner, &probes, &hooks, record)?;
        }
        Setting::Dqn { learner, cartpole, eval_every, eval_steps, probe_states } => {
            let env = CartpoleEnv::new(*cartpole);
            let dqn = Dqn::new(learner.clone())?;
            record.total_steps = cfg.total_steps.unwrap_or(learner.total_timesteps as usize);
            let probes = rl_probe(&random_policy_states(cartpole, *probe_states, seed)?)?;
            let window = cfg.meter.sync_window;
            let mut hooks = Hooks::new(|t, s: &forgetmeter::learners::dqn::DqnState| if t == 0 { None } else { s.last_loss });
            let sync_dqn = dqn.clone();
            hooks.near_sync = Box::new(move |s, k| sync_dqn.near_target_sync(s, window.unwrap_or(k as u64)));
            let (every, steps, params) = (*eval_every, *eval_steps, *cartpole);
            let eval_dqn = dqn.clone();
            hooks.evaluate = Box::new(move |t, s| {
                if t == 0 || t % every != 0 {
                    return Ok(None);
                }
                let mut rng = SeedTree::new(seed).rng("eval", t as u64);
                eval_dqn.evaluate_greedy(s, &params, steps, &mut rng).map(Some)
            });
            drive(cfg, seed, &env, &dqn, &probes, &hooks, record)?;
        }
        Setting::Degenerate { env } => {
            let env = sinusoid_env(env, seed)?;
            let learner = Degenerate::new(env.interface(), PredictiveDistribution::Gaussian { mean: 0.0, var: 1.0 })?;
            record.total_steps = cfg.total_steps.unwrap_or(env.total_steps());
            let hooks = Hooks::new(|t, _: &()| {
                let data = env.training_set(t);
                Some(data.iter().map(|(_, y)| y.as_real().powi(2)).sum::<f64>() / data.len() as f64)
            });
            let probes = validation_probes(&env, cfg.meter.num_probes)?;
            drive(cfg, seed, &env, &learner, &probes, &hooks, record)?;
        }
    }
    Ok(())
}

/// States visited by a uniformly random policy, one per episode step, spread
/// over episodes.
pub fn random_policy_states(params: &forgetmeter::envs::CartpoleParams, n: usize, seed: u64) -> forgetmeter::Result<Vec<Vec<f64>>> {
    let mut rng = SeedTree::new(seed).rng("probe-states", 0);
    let mut out = Vec::with_capacity(n);
    let mut s = cartpole_reset(&mut rng);
    while out.len() < n {
        let (next, _, done) = cartpole_step(params, &s, rng.random_range(0..2))?;
        if rng.random::<f64>() < 0.25 {
            out.push(next.to_vec());
        }
        s = if done { cartpole_reset(&mut rng) } else { next };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MeterSettings;
    use forgetmeter::envs::SinusoidConfig;

    fn degenerate() -> ExperimentConfig {
        ExperimentConfig {
            name: "flat".into(),
            setting: Setting::Degenerate { env: SinusoidConfig::default() },
            meter: MeterSettings { num_particles: 20, ks: vec![1, 40], ..Default::default() },
            seeds: vec![0],
            total_steps: None,
            grid_panels: None,
        }
    }

    #[test]
    fn degenerate_run_is_flat() {
        let r = run_experiment(&degenerate(), 3).unwrap();
        assert!(r.complete);
        assert_eq!(r.total_steps, 120);
        assert_eq!(r.steps.len(), 121);
        assert_eq!(r.gamma.len(), 40);
        assert!(r.gamma.iter().all(|g| g.gamma == 0.0));
        assert!((r.efficiency.unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_policy_states_are_distinct() {
        let s = random_policy_states(&Default::default(), 10, 0).unwrap();
        assert_eq!(s.len(), 10);
        assert_ne!(s[0], s[1]);
    }

    #[test]
    fn grid_covers_corners() {
        let g = grid_inputs(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![GRID_X.0, GRID_Y.0]);
        assert_eq!(g[8], vec![GRID_X.1, GRID_Y.1]);
    }

    #[test]
    fn coefficient_of_variation_matches_definition() {
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]), Some(0.0));
        let cv = coefficient_of_variation(&[1.0, 3.0]).unwrap();
        assert!((cv - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(coefficient_of_variation(&[1.0]), None);
    }
}

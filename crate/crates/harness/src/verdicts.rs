//! The thought-experiment verdict table: every scenario is run through the
//! consistency check and compared with its expected verdict.

use forgetmeter::envs::{gen_two_moons, sinusoid_env, two_moons_env, BitQueryEnv, CoinEnv, SequenceEnv, SinusoidConfig, TickEnv, TwoMoonsConfig};
use forgetmeter::learners::bayes::{BayesConfig, BayesLinReg, FeatureMap};
use forgetmeter::learners::mlp::{Mlp, OptimizerConfig};
use forgetmeter::learners::supervised::SupervisedHead;
use forgetmeter::learners::thought::{
    Clock, CoinFlipBayes, Degenerate, FifoStack, FunctionPicker, HashMapLearner, Moody, ParityChecker, TickTransform,
    TickedClassifier,
};
use forgetmeter::meter::{quantile, TAU_QUANTILE};
use forgetmeter::{
    check_consistency, estimate_gamma_curve, run_interaction, DivergenceKind, Environment, EvalProbe, ForgettingConfig,
    Learner, PredictiveDistribution, SeedTree, SnapshotSchedule, Verdict,
};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::NetConfig;
use crate::error::Result;
use crate::experiment::mlp_learner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictSuiteConfig {
    pub ks: Vec<usize>,
    pub num_particles: usize,
    pub seeds: Vec<u64>,
    pub calibration_seeds: Vec<u64>,
    /// Stochastic learners are consistent iff `Γ̂ ≤ threshold_factor · τ_MC`.
    pub threshold_factor: f64,
}

impl Default for VerdictSuiteConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 10, 40],
            num_particles: 1000,
            seeds: vec![0, 1, 2, 3],
            calibration_seeds: (100..120).collect(),
            threshold_factor: 2.0,
        }
    }
}

/// Monte Carlo noise level of one calibration family at one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub family: String,
    pub k: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub scenario: usize,
    pub name: String,
    pub seed: u64,
    pub k: usize,
    pub gamma: f64,
    pub std_error: f64,
    pub threshold: f64,
    pub expected: Verdict,
    pub observed: Verdict,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub config: VerdictSuiteConfig,
    pub calibration: Vec<TauRow>,
    pub rows: Vec<VerdictRow>,
}

impl VerdictReport {
    pub fn all_pass(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    /// `(scenario, name, passed rows, total rows)` in scenario order.
    pub fn by_scenario(&self) -> Vec<(usize, String, usize, usize)> {
        let mut out: Vec<(usize, String, usize, usize)> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|(s, n, _, _)| *s == r.scenario && *n == r.name) {
                Some(e) => {
                    e.2 += usize::from(r.pass);
                    e.3 += 1;
                }
                None => out.push((r.scenario, r.name.clone(), usize::from(r.pass), 1)),
            }
        }
        out.sort_by_key(|e| e.0);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    /// Deterministic learners: any positive Γ is forgetting.
    Exact,
    Regression,
    Sequence,
    Coin,
}

struct Thresholds {
    factor: f64,
    ks: Vec<usize>,
    regression: Vec<f64>,
    sequence: Vec<f64>,
    coin: Vec<f64>,
}

impl Thresholds {
    fn get(&self, family: Family, k: usize) -> f64 {
        let i = self.ks.iter().position(|&x| x == k).unwrap_or(0);
        match family {
            Family::Exact => 0.0,
            Family::Regression => self.factor * self.regression[i],
            Family::Sequence => self.factor * self.sequence[i],
            Family::Coin => self.factor * self.coin[i],
        }
    }
}

fn keys(n: usize) -> Result<EvalProbe> {
    Ok(EvalProbe::from_inputs(&(0..n).map(|k| vec![k as f64]).collect::<Vec<_>>())?)
}

/// Held-out inputs spread over the regression input range.
pub fn regression_grid() -> Result<EvalProbe> {
    Ok(EvalProbe::from_inputs(&(0..20).map(|i| vec![-3.8 + 0.4 * i as f64]).collect::<Vec<_>>())?)
}

fn cubic() -> Result<BayesLinReg> {
    Ok(BayesLinReg::new(BayesConfig { features: FeatureMap::Polynomial { degree: 3 }, prior_variance: 1.0, noise_variance: 0.01 })?)
}

const SEQUENCE_INPUTS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Objective values of the optimisation analogue: high values first, then a
/// new minimum.
const SEQUENCE_VALUES: [f64; 5] = [0.8, 0.6, 0.7, 0.5, -1.5];

fn sequence_env(values: &[f64]) -> Result<SequenceEnv> {
    Ok(SequenceEnv::new(SEQUENCE_INPUTS.iter().zip(values).map(|(&x, &y)| (vec![x], y)).collect())?)
}

fn regression_env(seed: u64) -> Result<forgetmeter::envs::SupervisedEnv> {
    Ok(sinusoid_env(&SinusoidConfig::default(), seed)?)
}

const REGRESSION_STEPS: usize = 40;

/// Per-k 99th percentile of Γ̂ over calibration seeds.
fn calibrate<E: Environment, L: Learner>(
    cfg: &VerdictSuiteConfig,
    learner: &L,
    env_for: impl Fn(u64) -> Result<E> + Sync,
    steps: usize,
    probes: &EvalProbe,
    divergence: DivergenceKind,
) -> Result<Vec<f64>>
where
    L: Sync,
    L::State: Send,
{
    let kmax = cfg.ks.iter().copied().max().unwrap_or(1);
    let fcfg = ForgettingConfig::new(kmax, cfg.num_particles, divergence);
    let curves = cfg
        .calibration_seeds
        .par_iter()
        .map(|&s| {
            let env = env_for(s)?;
            let seeds = SeedTree::new(s);
            let trace = run_interaction(&env, learner, steps, &SnapshotSchedule::none(), &seeds.child("interaction", 0))?;
            let curve = estimate_gamma_curve(learner, &env, &trace.final_state, &trace.history, probes, &fcfg, &cfg.ks, &seeds.child("calibration", 0))?;
            Ok(curve.into_iter().map(|e| e.gamma).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((0..cfg.ks.len()).map(|i| quantile(&curves.iter().map(|c| c[i]).collect::<Vec<_>>(), TAU_QUANTILE)).collect())
}

/// Smallest step count from `min_steps` at which the 5-bit stack is full and
/// holds both bit values. A stack of equal bits reproduces itself under its
/// own predictions, so the overwrite scenario needs mixed contents.
fn mixed_full_stack_steps(env: &BitQueryEnv, min_steps: usize, seed: u64) -> Result<usize> {
    let stack = FifoStack { capacity: 5 };
    let seeds = SeedTree::new(seed).child("interaction", 0);
    for steps in min_steps..min_steps + 200 {
        let s = run_interaction(env, &stack, steps, &SnapshotSchedule::none(), &seeds)?.final_state;
        if s.len() == 5 && s.iter().any(|&b| b != s[0]) {
            return Ok(steps);
        }
    }
    Err(crate::error::HarnessError::Precondition("bit stream never filled the stack with mixed bits".into()))
}

struct Scenario<'a> {
    number: usize,
    name: &'a str,
    expected: Verdict,
    family: Family,
    steps: usize,
    divergence: DivergenceKind,
}

fn judge<E: Environment, L: Learner>(
    cfg: &VerdictSuiteConfig,
    thresholds: &Thresholds,
    sc: Scenario<'_>,
    env: &E,
    learner: &L,
    probes: &EvalProbe,
    seed: u64,
) -> Result<Vec<VerdictRow>> {
    let seeds = SeedTree::new(seed);
    let trace = run_interaction(env, learner, sc.steps, &SnapshotSchedule::none(), &seeds.child("interaction", 0))?;
    let mut rows = Vec::with_capacity(cfg.ks.len());
    for &k in &cfg.ks {
        let threshold = thresholds.get(sc.family, k);
        let fcfg = ForgettingConfig::new(k, cfg.num_particles, sc.divergence);
        let (observed, est) = check_consistency(
            learner,
            env,
            &trace.final_state,
            &trace.history,
            probes,
            &fcfg,
            threshold,
            &seeds.child("verdict", k as u64),
        )?;
        rows.push(VerdictRow {
            scenario: sc.number,
            name: sc.name.to_string(),
            seed,
            k,
            gamma: est.gamma,
            std_error: est.std_error,
            threshold,
            expected: sc.expected,
            observed,
            pass: observed == sc.expected,
        });
    }
    Ok(rows)
}

fn scenarios_for_seed(cfg: &VerdictSuiteConfig, th: &Thresholds, seed: u64) -> Result<Vec<VerdictRow>> {
    use DivergenceKind::{KlCategorical, KlGaussian};
    use Family::*;
    use Verdict::{Consistent, Forgetting};
    let sc = |number, name, expected, family, steps, divergence| Scenario { number, name, expected, family, steps, divergence };
    let mut rows = Vec::new();
    let grid = regression_grid()?;
    let sinusoid = regression_env(seed)?;

    let flat = Degenerate::new(sinusoid.interface(), PredictiveDistribution::Gaussian { mean: 0.0, var: 1.0 })?;
    rows.extend(judge(cfg, th, sc(1, "degenerate learner", Consistent, Exact, REGRESSION_STEPS, KlGaussian), &sinusoid, &flat, &grid, seed)?);

    let bits = BitQueryEnv::new(5, 3, None, 0.5)?;
    let stack_steps = mixed_full_stack_steps(&bits, 25, seed)?;
    rows.extend(judge(cfg, th, sc(2, "5-bit stack", Forgetting, Exact, stack_steps, KlCategorical), &bits, &FifoStack { capacity: 5 }, &keys(5)?, seed)?);
    rows.extend(judge(cfg, th, sc(2, "0-bit stack", Consistent, Exact, stack_steps, KlCategorical), &bits, &FifoStack { capacity: 0 }, &keys(5)?, seed)?);

    let table = BitQueryEnv::new(20, 3, Some((0..20).map(|k| k % 2).collect()), 0.5)?;
    let map = HashMapLearner { classes: 3, null_class: 2 };
    rows.extend(judge(cfg, th, sc(3, "hash map", Consistent, Exact, 30, KlCategorical), &table, &map, &keys(20)?, seed)?);

    let ticks = TickEnv::clock();
    rows.extend(judge(cfg, th, sc(4, "clock", Consistent, Exact, 7 + seed as usize, KlCategorical), &ticks, &Clock, &keys(1)?, seed)?);

    let moody = Moody { inner: cubic()? };
    rows.extend(judge(cfg, th, sc(5, "moody learner", Consistent, Regression, REGRESSION_STEPS + 1, KlGaussian), &sinusoid, &moody, &grid, seed)?);

    let moons = two_moons_env(&TwoMoonsConfig::default(), seed)?;
    let picker = FunctionPicker::random(5, 2, seed)?;
    let moon_probes = EvalProbe::from_inputs(&moons.validation.iter().take(20).map(|(x, _)| x.clone()).collect::<Vec<_>>())?;
    rows.extend(judge(cfg, th, sc(6, "function picker", Consistent, Coin, 10, KlCategorical), &moons, &picker, &moon_probes, seed)?);

    let data = gen_two_moons(50, 0.1, &mut SeedTree::new(seed).rng("tick-data", 0))?;
    let tick_env = TickEnv::labelled(data.clone(), 2, seed)?;
    let net = Mlp::init(2, 4, 2, &mut SeedTree::new(seed).rng("tick-net", 0));
    let tick_probes =
        EvalProbe::from_inputs(&data.iter().take(20).map(|(x, _)| [vec![0.0], x.clone()].concat()).collect::<Vec<_>>())?;
    let flipper = TickedClassifier::new(net.clone(), TickTransform::FlipOnOdd)?;
    rows.extend(judge(cfg, th, sc(7, "binary flipper", Consistent, Exact, 9, KlCategorical), &tick_env, &flipper, &tick_probes, seed)?);
    let permuted = TickedClassifier::new(net, TickTransform::PermuteFrom { from: 5, permutation: vec![1, 0] })?;
    rows.extend(judge(cfg, th, sc(8, "label permutation", Consistent, Exact, 9, KlCategorical), &tick_env, &permuted, &tick_probes, seed)?);

    let net = NetConfig { hidden_dim: 5, optimizer: OptimizerConfig::adam(0.1), initial_noise_var: 1.0 };
    let mlp = mlp_learner(&sinusoid, &net, SupervisedHead::Regression)?;
    rows.extend(judge(cfg, th, sc(9, "generalisation on unseen inputs", Forgetting, Regression, REGRESSION_STEPS, KlGaussian), &sinusoid, &mlp, &grid, seed)?);

    let parity_bits = BitQueryEnv::new(2, 2, None, 0.5)?;
    rows.extend(judge(cfg, th, sc(10, "even-number checker", Consistent, Exact, 13, KlCategorical), &parity_bits, &ParityChecker, &keys(2)?, seed)?);

    let surprise = CoinEnv::new(0.5, [vec![1; 10], vec![0]].concat())?;
    rows.extend(judge(cfg, th, sc(11, "surprising coin flip", Consistent, Coin, 11, KlCategorical), &surprise, &CoinFlipBayes::default(), &keys(1)?, seed)?);

    let optimiser = sequence_env(&SEQUENCE_VALUES)?;
    rows.extend(judge(cfg, th, sc(12, "bayesian optimisation", Consistent, Sequence, SEQUENCE_INPUTS.len(), KlGaussian), &optimiser, &cubic()?, &grid, seed)?);
    Ok(rows)
}

/// Calibrate the noise thresholds, then run every scenario on every seed.
pub fn run_verdict_suite(cfg: &VerdictSuiteConfig) -> Result<VerdictReport> {
    if cfg.ks.is_empty() || cfg.ks.contains(&0) || cfg.num_particles == 0 || cfg.seeds.is_empty() || cfg.calibration_seeds.is_empty() {
        return Err(crate::error::HarnessError::Config("verdict suite needs positive ks, particles and seeds".into()));
    }
    let grid = regression_grid()?;
    let bayes = cubic()?;
    let regression = calibrate(cfg, &bayes, regression_env, REGRESSION_STEPS, &grid, DivergenceKind::KlGaussian)?;
    let sequence = calibrate(
        cfg,
        &bayes,
        |s| {
            let mut rng = SeedTree::new(s).rng("sequence-values", 0);
            sequence_env(&SEQUENCE_INPUTS.iter().map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<_>>())
        },
        SEQUENCE_INPUTS.len(),
        &grid,
        DivergenceKind::KlGaussian,
    )?;
    let coin = calibrate(cfg, &CoinFlipBayes::default(), |_| Ok(CoinEnv::new(0.5, Vec::new())?), 11, &keys(1)?, DivergenceKind::KlCategorical)?;
    let th = Thresholds { factor: cfg.threshold_factor, ks: cfg.ks.clone(), regression, sequence, coin };
    let mut calibration = Vec::new();
    for (family, taus) in [("regression", &th.regression), ("sequence", &th.sequence), ("coin", &th.coin)] {
        calibration.extend(cfg.ks.iter().zip(taus.iter()).map(|(&k, &tau)| TauRow { family: family.into(), k, tau }));
    }
    let per_seed = cfg.seeds.par_iter().map(|&s| scenarios_for_seed(cfg, &th, s)).collect::<Result<Vec<_>>>()?;
    Ok(VerdictReport { config: cfg.clone(), calibration, rows: per_seed.into_iter().flatten().collect() })
}

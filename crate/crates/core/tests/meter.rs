mod common;

use forgetmeter::envs::{gen_two_moons, BitQueryEnv, TickEnv};
use forgetmeter::learners::mlp::Mlp;
use forgetmeter::learners::thought::{
    Clock, Degenerate, FifoStack, FunctionPicker, HashMapLearner, ParityChecker, TickTransform, TickedClassifier,
};
use forgetmeter::{
    estimate_gamma, estimate_gamma_curve, run_interaction, sweep_k, DivergenceKind, Environment,
    Error, EvalProbe, ForgettingConfig, Interface, Learner, Observation, Output, PredictiveDistribution, SeedTree,
    SnapshotSchedule, StreamRng,
};
use proptest::prelude::*;
use rand::Rng;

fn keys(n: usize) -> EvalProbe {
    EvalProbe::from_inputs(&(0..n).map(|k| vec![k as f64]).collect::<Vec<_>>()).unwrap()
}

fn gamma_after<E: Environment, L: Learner>(env: &E, learner: &L, steps: usize, probes: &EvalProbe, k: usize, m: usize) -> forgetmeter::ForgettingEstimate {
    let trace = run_interaction(env, learner, steps, &SnapshotSchedule::none(), &SeedTree::new(6)).unwrap();
    let cfg = ForgettingConfig::new(k, m, DivergenceKind::KlCategorical);
    estimate_gamma(learner, env, &trace.final_state, &trace.history, probes, &cfg, &SeedTree::new(7)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn frozen_learner_has_exactly_zero_gamma(k in 1usize..20, m in 1usize..40, seed in any::<u64>()) {
        let env = common::moons(false, 0);
        let d = Degenerate::new(env.interface(), PredictiveDistribution::Categorical(vec![0.3, 0.7])).unwrap();
        let probes = EvalProbe::from_inputs(&[vec![0.0, 0.0], vec![1.0, -0.5]]).unwrap();
        let trace = run_interaction(&env, &d, 3, &SnapshotSchedule::none(), &SeedTree::new(seed)).unwrap();
        let cfg = ForgettingConfig::new(k, m, DivergenceKind::KlCategorical);
        let est = estimate_gamma(&d, &env, &(), &trace.history, &probes, &cfg, &SeedTree::new(seed ^ 1)).unwrap();
        prop_assert_eq!(est.gamma, 0.0);
        prop_assert_eq!(est.std_error, 0.0);
    }
}

#[test]
fn full_five_bit_stack_forgets_and_empty_stack_does_not() {
    let env = BitQueryEnv::new(5, 3, None, 0.5).unwrap();
    let full = gamma_after(&env, &FifoStack { capacity: 5 }, 25, &keys(5), 1, 50);
    assert!(full.gamma > 0.0);
    assert!(full.is_infinite() && full.std_error.is_infinite());
    let empty = gamma_after(&env, &FifoStack { capacity: 0 }, 25, &keys(5), 40, 50);
    assert_eq!(empty.gamma, 0.0);
}

#[test]
fn memories_clocks_and_parity_are_exactly_consistent() {
    let values: Vec<usize> = (0..20).map(|k| k % 2).collect();
    let env = BitQueryEnv::new(20, 3, Some(values), 0.5).unwrap();
    assert_eq!(gamma_after(&env, &HashMapLearner { classes: 3, null_class: 2 }, 30, &keys(20), 40, 50).gamma, 0.0);

    let bits = BitQueryEnv::new(2, 2, None, 0.5).unwrap();
    for k in [1, 10, 40] {
        assert_eq!(gamma_after(&bits, &ParityChecker, 13, &keys(2), k, 50).gamma, 0.0);
    }

    let clock_env = TickEnv::clock();
    let trace = run_interaction(&clock_env, &Clock, 7, &SnapshotSchedule::none(), &SeedTree::new(0)).unwrap();
    assert_eq!(trace.final_state, 7.0);
    let cfg = ForgettingConfig::new(40, 20, DivergenceKind::KlCategorical);
    let est = estimate_gamma(&Clock, &clock_env, &7.0, &trace.history, &keys(1), &cfg, &SeedTree::new(1)).unwrap();
    assert_eq!(est.gamma, 0.0);
}

#[test]
fn random_and_ticked_learners_are_exactly_consistent() {
    let moons = common::moons(false, 0);
    let picker = FunctionPicker::random(5, 2, 3).unwrap();
    let probes = EvalProbe::from_inputs(&moons.validation.iter().take(10).map(|(x, _)| x.clone()).collect::<Vec<_>>()).unwrap();
    assert_eq!(gamma_after(&moons, &picker, 10, &probes, 10, 50).gamma, 0.0);

    let data = gen_two_moons(50, 0.1, &mut SeedTree::new(0).rng("d", 0)).unwrap();
    let tick = TickEnv::labelled(data.clone(), 2, 4).unwrap();
    let net = Mlp::init(2, 4, 2, &mut SeedTree::new(0).rng("net", 0));
    let probes = EvalProbe::from_inputs(&data.iter().take(10).map(|(x, _)| [vec![0.0], x.clone()].concat()).collect::<Vec<_>>()).unwrap();
    for transform in [TickTransform::FlipOnOdd, TickTransform::PermuteFrom { from: 5, permutation: vec![1, 0] }] {
        let l = TickedClassifier::new(net.clone(), transform).unwrap();
        for steps in [4, 5, 9] {
            assert_eq!(gamma_after(&tick, &l, steps, &probes, 40, 20).gamma, 0.0);
        }
    }
}

/// Numerically diverges during learning with probability `p` per update.
struct Flaky {
    p: f64,
    interface: Interface,
}

impl Learner for Flaky {
    type State = u32;

    fn interface(&self) -> Interface {
        self.interface
    }

    fn init_state(&self, _: &mut StreamRng) -> forgetmeter::Result<u32> {
        Ok(0)
    }

    fn predict(&self, _: &u32, _: &Observation) -> forgetmeter::Result<Vec<PredictiveDistribution>> {
        Ok(vec![PredictiveDistribution::Categorical(vec![0.5, 0.5])])
    }

    fn learn(&self, s: &u32, _: &Observation, _: &Output, rng: &mut StreamRng) -> forgetmeter::Result<u32> {
        if rng.random::<f64>() < self.p {
            return Err(Error::NumericalDivergence("flaky".into()));
        }
        Ok(s + 1)
    }

    fn infer(&self, s: &u32, _: &Observation, _: &Output, _: &mut StreamRng) -> forgetmeter::Result<u32> {
        Ok(*s)
    }
}

#[test]
fn diverging_particles_are_dropped_up_to_the_limit() {
    let env = BitQueryEnv::new(2, 2, None, 0.5).unwrap();
    let history = forgetmeter::History::start(Observation::SupervisedPair { inputs: vec![vec![0.0]], prev_targets: None });
    let cfg = ForgettingConfig::new(1, 1000, DivergenceKind::KlCategorical);
    let few = Flaky { p: 0.03, interface: env.interface() };
    let est = estimate_gamma(&few, &env, &0, &history, &keys(2), &cfg, &SeedTree::new(0)).unwrap();
    assert!(est.dropped_particles > 0 && est.dropped_particles <= 100);
    let many = Flaky { p: 0.3, interface: env.interface() };
    let err = estimate_gamma(&many, &env, &0, &history, &keys(2), &cfg, &SeedTree::new(0)).unwrap_err();
    assert!(matches!(err, Error::TooManyDroppedParticles { .. }));
}

fn regression_snapshot() -> (forgetmeter::envs::SupervisedEnv, forgetmeter::learners::supervised::MlpLearner, forgetmeter::InteractionTrace<forgetmeter::learners::supervised::MlpLearnerState>) {
    let env = common::sinusoid();
    let learner = common::regression_learner(&env, 5);
    let trace = run_interaction(&env, &learner, 40, &SnapshotSchedule::none(), &SeedTree::new(2)).unwrap();
    (env, learner, trace)
}

fn grid_probes() -> EvalProbe {
    EvalProbe::from_inputs(&(0..21).map(|i| vec![-4.0 + 0.4 * i as f64]).collect::<Vec<_>>()).unwrap()
}

#[test]
fn estimates_leave_the_live_state_alone_and_ignore_thread_count() {
    let (env, learner, trace) = regression_snapshot();
    let live = trace.final_state.clone();
    let cfg = ForgettingConfig::new(5, 64, DivergenceKind::KlGaussian);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            estimate_gamma_curve(&learner, &env, &trace.final_state, &trace.history, &grid_probes(), &cfg, &[10, 1, 5], &SeedTree::new(3)).unwrap()
        })
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    assert_eq!(trace.final_state, live);
    assert_eq!(one.iter().map(|e| e.k).collect::<Vec<_>>(), vec![1, 5, 10]);
    assert!(one.iter().all(|e| e.gamma > 0.0 && e.gamma.is_finite() && e.per_probe.len() == 21));
    let swept = sweep_k(&learner, &env, &trace.final_state, &trace.history, &grid_probes(), &cfg, &[1, 5, 10], &SeedTree::new(3)).unwrap();
    assert_eq!(swept.into_iter().map(|(_, e)| e).collect::<Vec<_>>(), one);
}

#[test]
fn standard_error_shrinks_like_inverse_root_m() {
    let (env, learner, trace) = regression_snapshot();
    let se = |m: usize| {
        let cfg = ForgettingConfig::new(5, m, DivergenceKind::KlGaussian);
        estimate_gamma(&learner, &env, &trace.final_state, &trace.history, &grid_probes(), &cfg, &SeedTree::new(11)).unwrap().std_error
    };
    let (small, large) = (se(100), se(1000));
    assert!(large < small);
    let ratio = small / large;
    let expected = 10f64.sqrt();
    assert!(ratio > expected / 2.0 && ratio < expected * 2.0, "ratio {ratio}");
}

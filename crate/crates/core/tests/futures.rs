mod common;

use forgetmeter::envs::{CartpoleEnv, CoinEnv, GenerativeConfig, GenerativeEnv};
use forgetmeter::futures::hybrid_next;
use forgetmeter::learners::bayes::{
    BayesConfig, BayesLinReg, FeatureMap, PointConfig, PointEstimateLinReg, VariationalConfig, VariationalLinReg,
};
use forgetmeter::learners::dqn::{rl_probe, Dqn, DqnConfig};
use forgetmeter::learners::flow::{FlowConfig, FlowLearner};
use forgetmeter::learners::thought::{CoinFlipBayes, Degenerate};
use forgetmeter::{
    probe_predictives, rollout, run_interaction, Environment, Error, EvalProbe, History, HybridEnvironment, Learner,
    Observation, Output, PredictiveDistribution, RolloutMode, SeedTree, SnapshotSchedule, Target,
};

fn grid(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]).collect()
}

fn trained<E: Environment, L: Learner>(env: &E, learner: &L, steps: usize, seed: u64) -> (L::State, History) {
    let trace = run_interaction(env, learner, steps, &SnapshotSchedule::none(), &SeedTree::new(seed)).unwrap();
    (trace.final_state, trace.history)
}

fn assert_frozen<E: Environment, L: Learner>(env: &E, learner: &L, state: &L::State, history: &History, probes: &EvalProbe) {
    let before = probe_predictives(learner, state, probes).unwrap();
    let live = state.clone();
    let r = rollout(learner, env, state, history, 15, RolloutMode::Inference, &mut SeedTree::new(1).rng("r", 0)).unwrap();
    assert_eq!(probe_predictives(learner, &r.terminal_state, probes).unwrap(), before);
    assert_eq!(*state, live);
}

#[test]
fn inference_rollouts_freeze_parameterized_beliefs() {
    let env = common::sinusoid();
    let probes = EvalProbe::from_inputs(&grid(-4.0, 4.0, 17)).unwrap();

    let mlp = common::regression_learner(&env, 5);
    let (s, h) = trained(&env, &mlp, 40, 0);
    assert_frozen(&env, &mlp, &s, &h, &probes);

    let features = FeatureMap::Polynomial { degree: 3 };
    let bayes = BayesLinReg::new(BayesConfig { features, prior_variance: 1.0, noise_variance: 0.01 }).unwrap();
    let (s, h) = trained(&env, &bayes, 40, 0);
    assert_frozen(&env, &bayes, &s, &h, &probes);

    let features = FeatureMap::Polynomial { degree: 1 };
    let var = VariationalLinReg::new(VariationalConfig { features, prior_variance: 1.0, noise_variance: 0.1, lr: 1e-4, dataset_size: 40 }).unwrap();
    let (s, h) = trained(&env, &var, 40, 0);
    assert_frozen(&env, &var, &s, &h, &probes);

    let point = PointEstimateLinReg::new(PointConfig { features, noise_variance: 0.01, lr: 0.001 }).unwrap();
    let (s, h) = trained(&env, &point, 40, 0);
    assert_frozen(&env, &point, &s, &h, &probes);

    let moons = common::moons(false, 0);
    let clf = common::classifier();
    let (s, h) = trained(&moons, &clf, 40, 0);
    assert_frozen(&moons, &clf, &s, &h, &EvalProbe::from_inputs(&moons.validation.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>()).unwrap());

    let cart = CartpoleEnv::default();
    let dqn = Dqn::new(DqnConfig { learning_starts: 50, train_frequency: 1, batch_size: 16, total_timesteps: 400, ..Default::default() }).unwrap();
    let (s, h) = trained(&cart, &dqn, 200, 0);
    let states: Vec<Vec<f64>> = (0..5).map(|i| vec![0.01 * i as f64, 0.0, -0.02, 0.1]).collect();
    assert_frozen(&cart, &dqn, &s, &h, &rl_probe(&states).unwrap());

    let gen = GenerativeEnv::new(&GenerativeConfig { num_samples: 200, num_heldout: 50, batch_size: 50, epochs: 2, ..Default::default() }, 0).unwrap();
    let flow = FlowLearner::new(FlowConfig { hidden_dim: 8, num_integration_steps: 10, output_batch: 20, num_probe_samples: 30, ..Default::default() }).unwrap();
    let (s, h) = trained(&gen, &flow, 5, 0);
    assert_frozen(&gen, &flow, &s, &h, &EvalProbe::new(vec![Observation::GenSample { samples: vec![] }]).unwrap());
}

#[test]
fn rollouts_never_touch_the_live_run() {
    let env = common::sinusoid();
    let mlp = common::regression_learner(&env, 5);
    let trace = run_interaction(&env, &mlp, 50, &SnapshotSchedule::none(), &SeedTree::new(2)).unwrap();
    let (state, history) = (trace.final_state.clone(), trace.history.clone());
    for mode in [RolloutMode::Learning, RolloutMode::Inference] {
        let r = rollout(&mlp, &env, &state, &history, 12, mode, &mut SeedTree::new(3).rng("r", 0)).unwrap();
        assert_eq!(r.future_history.len(), 12);
        assert_eq!(r.future_history.origin_time(), history.time() + 1);
        assert_eq!(r.future_history.time(), history.time() + 12);
    }
    assert_eq!(state, trace.final_state);
    assert_eq!(history, trace.history);
}

#[test]
fn learning_rollout_moves_network_parameters() {
    let env = common::sinusoid();
    let mlp = common::regression_learner(&env, 5);
    let (s, h) = trained(&env, &mlp, 30, 1);
    let r = rollout(&mlp, &env, &s, &h, 5, RolloutMode::Learning, &mut SeedTree::new(0).rng("r", 0)).unwrap();
    let delta: f64 = r.terminal_state.net.params.iter().zip(&s.net.params).map(|(a, b)| (a - b).abs()).sum();
    assert!(delta > 0.0);
}

#[test]
fn degenerate_rollout_keeps_the_initial_state() {
    let env = common::moons(false, 0);
    let d = Degenerate::new(env.interface(), PredictiveDistribution::Categorical(vec![0.3, 0.7])).unwrap();
    let (s, h) = trained(&env, &d, 3, 0);
    for mode in [RolloutMode::Learning, RolloutMode::Inference] {
        let r = rollout(&d, &env, &s, &h, 40, mode, &mut SeedTree::new(0).rng("r", 0)).unwrap();
        assert_eq!(r.terminal_state, s);
    }
    let err = rollout(&d, &env, &s, &h, 0, RolloutMode::Learning, &mut SeedTree::new(0).rng("r", 0)).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

fn single_input_history(x: &[f64]) -> History {
    History::start(Observation::SupervisedPair { inputs: vec![x.to_vec()], prev_targets: None })
}

#[test]
fn hybrid_targets_follow_the_predictive() {
    let env = common::moons(false, 0);
    let clf = common::classifier();
    let (s, _) = trained(&env, &clf, 10, 4);
    let x = vec![0.5, 0.25];
    let history = single_input_history(&x);
    let p1 = match &clf.predict(&s, history.last_observation().unwrap()).unwrap()[0] {
        PredictiveDistribution::Categorical(p) => p[1],
        other => panic!("{other:?}"),
    };
    let hybrid = HybridEnvironment::new(&env, 0);
    let mut rng = SeedTree::new(5).rng("hybrid", 0);
    let n = 10_000;
    let mut ones = 0usize;
    for _ in 0..n {
        let (y, obs) = hybrid_next(&clf, &hybrid, &s, &history, &mut rng).unwrap();
        let targets = match &obs {
            Observation::SupervisedPair { prev_targets: Some(t), inputs } => {
                assert_eq!(inputs.len(), env.batch_size);
                t.clone()
            }
            other => panic!("{other:?}"),
        };
        assert_eq!(Output::PredictedTargets(targets.clone()), y);
        ones += usize::from(targets[0] == Target::Class(1));
    }
    let se = (p1 * (1.0 - p1) / n as f64).sqrt();
    assert!((ones as f64 / n as f64 - p1).abs() < 3.0 * se, "{ones} vs {p1}");
}

#[test]
fn deterministic_predictive_gives_deterministic_targets() {
    let env = common::moons(false, 0);
    let d = Degenerate::new(env.interface(), PredictiveDistribution::Categorical(vec![1.0, 0.0])).unwrap();
    let history = single_input_history(&[0.0, 0.0]);
    let hybrid = HybridEnvironment::new(&env, 0);
    let mut rng = SeedTree::new(0).rng("h", 0);
    for _ in 0..200 {
        let (y, _) = hybrid_next(&d, &hybrid, &(), &history, &mut rng).unwrap();
        assert_eq!(y, Output::PredictedTargets(vec![Target::Class(0)]));
    }
}

#[test]
fn coin_hybrid_matches_the_posterior_predictive() {
    let coin = CoinFlipBayes::default();
    let env = CoinEnv::new(0.5, vec![1, 1, 0, 1, 0]).unwrap();
    let (s, h) = trained(&env, &coin, 5, 0);
    assert_eq!((s.heads, s.total), (3, 5));
    // Posterior predictive by enumeration over a fine grid of heads rates.
    let n = 200_000;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let th = (i as f64 + 0.5) / n as f64;
        let w = th.powi(3) * (1.0 - th).powi(2);
        num += th * w;
        den += w;
    }
    let enumerated = num / den;
    assert!((coin.heads_probability(&s) - enumerated).abs() < 1e-9);
    let hybrid = HybridEnvironment::new(&env, h.time());
    let mut rng = SeedTree::new(1).rng("h", 0);
    let draws = 10_000;
    let heads = (0..draws)
        .filter(|_| hybrid_next(&coin, &hybrid, &s, &h, &mut rng).unwrap().0 == Output::PredictedTargets(vec![Target::Class(1)]))
        .count() as f64;
    let se = (enumerated * (1.0 - enumerated) / draws as f64).sqrt();
    assert!((heads / draws as f64 - enumerated).abs() < 3.0 * se);
}

#[test]
fn regression_hybrid_uses_the_fitted_residual_variance() {
    let env = common::sinusoid();
    let mlp = common::regression_learner(&env, 5);
    let (s, _) = trained(&env, &mlp, 60, 0);
    let s = mlp.prepare_estimate(&s).unwrap();
    let x = vec![1.0];
    let history = single_input_history(&x);
    let (mean, var) = match &mlp.predict(&s, history.last_observation().unwrap()).unwrap()[0] {
        PredictiveDistribution::Gaussian { mean, var } => (*mean, *var),
        other => panic!("{other:?}"),
    };
    let val = env.validation_pairs();
    let mse = val.iter().map(|(x, y)| (s.net.forward(x).unwrap()[0] - y).powi(2)).sum::<f64>() / val.len() as f64;
    assert!((var - mse).abs() < 1e-12);
    let hybrid = HybridEnvironment::new(&env, 0);
    let mut rng = SeedTree::new(2).rng("h", 0);
    let n = 20_000;
    let ys: Vec<f64> = (0..n)
        .map(|_| match hybrid_next(&mlp, &hybrid, &s, &history, &mut rng).unwrap().0 {
            Output::PredictedTargets(t) => t[0].as_real(),
            other => panic!("{other:?}"),
        })
        .collect();
    let m = ys.iter().sum::<f64>() / n as f64;
    let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt());
    assert!((v / var - 1.0).abs() < 0.05);
}

#[test]
fn bayes_probe_predictive_matches_grid_integration() {
    let bayes = BayesLinReg::new(BayesConfig { features: FeatureMap::Identity { dim: 2 }, prior_variance: 1.0, noise_variance: 0.1 }).unwrap();
    let data = vec![(vec![1.0, 0.5], 0.8), (vec![-0.3, 1.0], 0.1), (vec![0.7, -0.6], 0.9)];
    let post = bayes.posterior(&data).unwrap();
    let probes = EvalProbe::from_inputs(&[vec![0.4, -1.2], vec![1.5, 0.3]]).unwrap();
    let preds = probe_predictives(&bayes, &post, &probes).unwrap();
    // Posterior moments by quadrature of prior × likelihood on a 200² grid.
    let n = 200;
    let (lo, hi) = (-3.0, 3.0);
    let h = (hi - lo) / n as f64;
    let mut w_sum = 0.0;
    let mut m = [0.0; 2];
    let mut s2 = [[0.0; 2]; 2];
    for i in 0..n {
        for j in 0..n {
            let th = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
            let mut logp = -0.5 * (th[0] * th[0] + th[1] * th[1]);
            for (x, y) in &data {
                let r = y - (th[0] * x[0] + th[1] * x[1]);
                logp -= r * r / (2.0 * 0.1);
            }
            let w = logp.exp();
            w_sum += w;
            for a in 0..2 {
                m[a] += w * th[a];
                for b in 0..2 {
                    s2[a][b] += w * th[a] * th[b];
                }
            }
        }
    }
    for a in 0..2 {
        m[a] /= w_sum;
    }
    for (p, pred) in probes.points().iter().zip(&preds) {
        let x = match p {
            Observation::SupervisedPair { inputs, .. } => inputs[0].clone(),
            _ => unreachable!(),
        };
        let mean = m[0] * x[0] + m[1] * x[1];
        let mut var = 0.1;
        for a in 0..2 {
            for b in 0..2 {
                var += x[a] * x[b] * (s2[a][b] / w_sum - m[a] * m[b]);
            }
        }
        match pred {
            PredictiveDistribution::Gaussian { mean: pm, var: pv } => {
                assert!((pm - mean).abs() < 1e-3, "{pm} vs {mean}");
                assert!((pv - var).abs() < 1e-3, "{pv} vs {var}");
            }
            other => panic!("{other:?}"),
        }
    }
}

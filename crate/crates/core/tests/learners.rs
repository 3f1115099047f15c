mod common;

use forgetmeter::learners::bayes::{
    BayesConfig, BayesLinReg, FeatureMap, PointConfig, PointEstimateLinReg, VariationalConfig, VariationalLinReg,
};
use forgetmeter::{run_interaction, Learner, Observation, PredictiveDistribution, SeedTree, SnapshotSchedule};
use nalgebra::DMatrix;

fn fig6_data() -> Vec<(Vec<f64>, f64)> {
    vec![(vec![-1.0], -0.4), (vec![-0.2], 0.35), (vec![0.5], 0.9), (vec![1.3], 1.6)]
}

fn fig6_bayes() -> BayesLinReg {
    BayesLinReg::new(BayesConfig { features: FeatureMap::Polynomial { degree: 1 }, prior_variance: 1.0, noise_variance: 0.1 }).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn conjugate_posterior_ignores_observation_order() {
    let b = fig6_bayes();
    let data = fig6_data();
    let base = b.posterior(&data).unwrap();
    let perms = permutations(4);
    assert_eq!(perms.len(), 24);
    for p in perms {
        let s = b.posterior(&p.iter().map(|&i| data[i].clone()).collect::<Vec<_>>()).unwrap();
        assert!((&s.mean - &base.mean).amax() < 1e-10);
        assert!((&s.cov - &base.cov).amax() < 1e-10);
    }
}

#[test]
fn conditioning_on_a_predicted_point_preserves_posterior_moments() {
    let b = BayesLinReg::new(BayesConfig { features: FeatureMap::Polynomial { degree: 2 }, prior_variance: 2.0, noise_variance: 0.3 }).unwrap();
    let current = b.posterior(&fig6_data()).unwrap();
    let x = [0.7];
    let (m, v) = b.predictive(&current, &x).unwrap();
    let sd = v.sqrt();
    let n = 4001;
    let half = 12.0 * sd;
    let h = 2.0 * half / (n - 1) as f64;
    let d = current.mean.len();
    let mut mean = nalgebra::DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for i in 0..n {
        let y = m - half + i as f64 * h;
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 } * h * (-(y - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let s = forgetmeter::learners::bayes::bayes_update(&b.config, &current, &x, y).unwrap();
        mean += &s.mean * w;
        second += (&s.cov + &s.mean * s.mean.transpose()) * w;
    }
    assert!((&mean - &current.mean).amax() < 1e-6);
    let expected = &current.cov + &current.mean * current.mean.transpose();
    assert!((second - expected).amax() < 1e-6);
}

#[test]
fn constrained_learners_depend_on_order() {
    let data = fig6_data();
    let reversed: Vec<_> = data.iter().rev().cloned().collect();
    let point = PointEstimateLinReg::new(PointConfig { features: FeatureMap::Polynomial { degree: 1 }, noise_variance: 0.1, lr: 0.3 }).unwrap();
    let run_point = |d: &[(Vec<f64>, f64)]| d.iter().try_fold(point.initial(), |s, p| point.point_step(&s, std::slice::from_ref(p))).unwrap();
    let (a, b) = (run_point(&data), run_point(&reversed));
    assert!(a.theta.iter().zip(&b.theta).any(|(x, y)| (x - y).abs() > 1e-3));

    let var = VariationalLinReg::new(VariationalConfig {
        features: FeatureMap::Polynomial { degree: 1 },
        prior_variance: 1.0,
        noise_variance: 0.1,
        lr: 0.01,
        dataset_size: 4,
    })
    .unwrap();
    let seeds = SeedTree::new(0);
    let run_var = |d: &[(Vec<f64>, f64)]| {
        d.iter()
            .enumerate()
            .try_fold(var.prior(), |s, (i, p)| var.variational_step(&s, std::slice::from_ref(p), &mut seeds.rng("elbo", i as u64)))
            .unwrap()
    };
    let (a, b) = (run_var(&data), run_var(&reversed));
    assert!(a.mean.iter().zip(&b.mean).any(|(x, y)| (x - y).abs() > 1e-3));
}

#[test]
fn trained_classifier_separates_two_moons() {
    for seed in 0..3 {
        let env = common::moons(false, seed);
        let learner = common::classifier();
        let trace = run_interaction(&env, &learner, env.total_steps(), &SnapshotSchedule::none(), &SeedTree::new(seed)).unwrap();
        let inputs: Vec<Vec<f64>> = env.validation.iter().map(|(x, _)| x.clone()).collect();
        let preds = learner.predict(&trace.final_state, &Observation::SupervisedPair { inputs, prev_targets: None }).unwrap();
        let correct = preds
            .iter()
            .zip(&env.validation)
            .filter(|(p, (_, t))| match p {
                PredictiveDistribution::Categorical(q) => (q[1] > 0.5) as usize as f64 == t.as_real(),
                _ => false,
            })
            .count();
        let acc = correct as f64 / preds.len() as f64;
        assert!(acc >= 0.95, "seed {seed}: accuracy {acc}");
    }
}

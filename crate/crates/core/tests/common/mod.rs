#![allow(dead_code)]

use forgetmeter::envs::{sinusoid_env, two_moons_env, SinusoidConfig, SupervisedEnv, TwoMoonsConfig};
use forgetmeter::learners::mlp::OptimizerConfig;
use forgetmeter::learners::supervised::{MlpLearner, MlpLearnerConfig, SupervisedHead};

pub fn sinusoid() -> SupervisedEnv {
    sinusoid_env(&SinusoidConfig::default(), 1).unwrap()
}

pub fn regression_learner(env: &SupervisedEnv, hidden: usize) -> MlpLearner {
    MlpLearner::new(
        MlpLearnerConfig {
            input_dim: 1,
            hidden_dim: hidden,
            head: SupervisedHead::Regression,
            optimizer: OptimizerConfig::adam(0.1),
            initial_noise_var: 1.0,
        },
        env.validation_pairs(),
    )
    .unwrap()
}

pub fn moons(class_incremental: bool, seed: u64) -> SupervisedEnv {
    two_moons_env(&TwoMoonsConfig { class_incremental, ..Default::default() }, seed).unwrap()
}

pub fn classifier() -> MlpLearner {
    MlpLearner::new(
        MlpLearnerConfig {
            input_dim: 2,
            hidden_dim: 10,
            head: SupervisedHead::Classification { classes: 2 },
            optimizer: OptimizerConfig::adam(0.1),
            initial_noise_var: 1.0,
        },
        Vec::new(),
    )
    .unwrap()
}

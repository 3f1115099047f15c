//! Conditional flow matching with a linear noise-to-data interpolant.
//!
//! A tanh network `v(x, t)` regresses the velocity `x₁ − x₀` at
//! `x_t = (1 − t) x₀ + t x₁`; samples are generated by Euler integration of
//! the learned field from standard normal noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{mlp_gradient, Labels, Mlp, OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::predictive::PredictiveDistribution;
use crate::process::{Interface, Learner, Observation, ObservationSpace, Output, OutputSpace};
use crate::rng::{SeedTree, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub dim: usize,
    pub hidden_dim: usize,
    pub num_integration_steps: usize,
    pub optimizer: OptimizerConfig,
    /// Samples emitted per output.
    pub output_batch: usize,
    /// Size of the fixed noise set pushed through the flow to form the
    /// predictive.
    pub num_probe_samples: usize,
    pub probe_seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            hidden_dim: 64,
            num_integration_steps: 100,
            optimizer: OptimizerConfig::adam(0.01),
            output_batch: 2500,
            num_probe_samples: 200,
            probe_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub net: Mlp,
    pub optimizer: OptimizerState,
    pub last_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowLearner {
    pub config: FlowConfig,
    probe_noise: Vec<Vec<f64>>,
}

fn normal_vec(dim: usize, rng: &mut StreamRng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Network inputs and velocity targets for data `x1`, noise `x0` and times `ts`.
pub fn flow_regression_batch(x1: &[Vec<f64>], x0: &[Vec<f64>], ts: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut inputs = Vec::with_capacity(x1.len());
    let mut targets = Vec::with_capacity(x1.len());
    for ((a, b), &t) in x1.iter().zip(x0).zip(ts) {
        let mut z: Vec<f64> = a.iter().zip(b).map(|(d, n)| (1.0 - t) * n + t * d).collect();
        z.push(t);
        inputs.push(z);
        targets.push(a.iter().zip(b).map(|(d, n)| d - n).collect());
    }
    (inputs, targets)
}

/// Flow-matching loss and gradient for fixed noise and times.
pub fn flow_loss_and_grad(net: &Mlp, x1: &[Vec<f64>], x0: &[Vec<f64>], ts: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (inputs, targets) = flow_regression_batch(x1, x0, ts);
    mlp_gradient(net, &inputs, Labels::Real(&targets))
}

impl FlowLearner {
    pub fn new(config: FlowConfig) -> Result<Self> {
        config.optimizer.validate()?;
        if config.dim == 0 || config.hidden_dim == 0 || config.num_integration_steps == 0 || config.output_batch == 0 {
            return Err(Error::Precondition("flow dimensions must be positive".into()));
        }
        let mut rng = SeedTree::new(config.probe_seed).rng("flow-probe-noise", 0);
        let probe_noise = (0..config.num_probe_samples.max(1)).map(|_| normal_vec(config.dim, &mut rng)).collect();
        Ok(Self { config, probe_noise })
    }

    pub fn state_from_net(&self, net: Mlp) -> FlowState {
        FlowState { optimizer: self.config.optimizer.init_state(net.params.len()), net, last_loss: None }
    }

    /// Euler-integrate each noise vector from `t = 0` to `t = 1`.
    pub fn push_forward(&self, state: &FlowState, noise: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.config.num_integration_steps;
        let dt = 1.0 / n as f64;
        let d = self.config.dim;
        let mut hidden = vec![0.0; self.config.hidden_dim];
        let mut v = vec![0.0; d];
        let mut z = vec![0.0; d + 1];
        let mut out = Vec::with_capacity(noise.len());
        for x0 in noise {
            let mut x = x0.clone();
            for i in 0..n {
                z[..d].copy_from_slice(&x);
                z[d] = i as f64 * dt;
                state.net.forward_into(&z, &mut hidden, &mut v);
                x.iter_mut().zip(&v).for_each(|(a, b)| *a += dt * b);
            }
            if x.iter().any(|c| !c.is_finite()) {
                return Err(Error::NumericalDivergence("non-finite generated sample".into()));
            }
            out.push(x);
        }
        Ok(out)
    }

    pub fn generate(&self, state: &FlowState, n: usize, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
        let noise: Vec<Vec<f64>> = (0..n).map(|_| normal_vec(self.config.dim, rng)).collect();
        self.push_forward(state, &noise)
    }

    /// One optimizer step on a data batch with fresh noise and times.
    pub fn train_step(&self, state: &FlowState, batch: &[Vec<f64>], rng: &mut StreamRng) -> Result<FlowState> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty flow batch".into()));
        }
        let x0: Vec<Vec<f64>> = batch.iter().map(|_| normal_vec(self.config.dim, rng)).collect();
        let ts: Vec<f64> = batch.iter().map(|_| rng.random::<f64>()).collect();
        let (loss, grad) = flow_loss_and_grad(&state.net, batch, &x0, &ts)?;
        let mut next = state.clone();
        self.config.optimizer.apply(&mut next.optimizer, &mut next.net.params, &grad)?;
        next.last_loss = Some(loss);
        Ok(next)
    }
}

impl Learner for FlowLearner {
    type State = FlowState;

    fn interface(&self) -> Interface {
        Interface {
            observation: ObservationSpace::Generative { dim: self.config.dim },
            output: OutputSpace::Samples { dim: self.config.dim },
        }
    }

    fn init_state(&self, rng: &mut StreamRng) -> Result<FlowState> {
        Ok(self.state_from_net(Mlp::init(self.config.dim + 1, self.config.hidden_dim, self.config.dim, rng)))
    }

    /// The fixed probe noise pushed through the current flow.
    fn predict(&self, state: &FlowState, _obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        Ok(vec![PredictiveDistribution::Empirical(self.push_forward(state, &self.probe_noise)?)])
    }

    fn sample_output(&self, state: &FlowState, _obs: &Observation, rng: &mut StreamRng) -> Result<Output> {
        Ok(Output::GeneratedSamples(self.generate(state, self.config.output_batch, rng)?))
    }

    fn learn(&self, state: &FlowState, obs: &Observation, _out: &Output, rng: &mut StreamRng) -> Result<FlowState> {
        match obs {
            Observation::GenSample { samples } if !samples.is_empty() => self.train_step(state, samples, rng),
            Observation::GenSample { .. } => Ok(state.clone()),
            other => Err(Error::Interface(format!("flow learner expects samples, got {other:?}"))),
        }
    }

    fn infer(&self, state: &FlowState, _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<FlowState> {
        Ok(state.clone())
    }

    fn is_finite(&self, state: &FlowState) -> bool {
        state.net.is_finite() && state.optimizer.is_finite()
    }

    fn step_loss(&self, state: &FlowState) -> Option<f64> {
        state.last_loss
    }

    fn evaluate_loss(&self, state: &FlowState, _data: &[(Vec<f64>, crate::process::Target)]) -> Option<f64> {
        state.last_loss
    }
}

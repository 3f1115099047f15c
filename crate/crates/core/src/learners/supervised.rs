//! Neural regression and classification learners.
//!
//! The state keeps the inputs presented at the previous step; their targets
//! arrive with the next observation, at which point one optimizer step is
//! taken on that minibatch.

use serde::{Deserialize, Serialize};

use super::mlp::{mlp_gradient, mlp_loss, softmax, Labels, Mlp, OptimizerConfig, OptimizerState};
use super::supervised_parts;
use crate::error::{Error, Result};
use crate::predictive::{fit_residual_variance, PointPredictor, PredictiveDistribution};
use crate::process::{Interface, Learner, Observation, ObservationSpace, Output, OutputSpace, Target};
use crate::rng::StreamRng;

/// Output head of a supervised network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SupervisedHead {
    Regression,
    Classification { classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLearnerConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub head: SupervisedHead,
    pub optimizer: OptimizerConfig,
    /// Predictive variance used until the first residual fit.
    #[serde(default = "default_noise_var")]
    pub initial_noise_var: f64,
}

fn default_noise_var() -> f64 {
    1.0
}

/// One-hidden-layer tanh network trained online on minibatches.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLearner {
    pub config: MlpLearnerConfig,
    /// Held-out pairs used to fit the regression predictive variance.
    pub validation: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLearnerState {
    pub net: Mlp,
    pub optimizer: OptimizerState,
    /// Inputs awaiting their targets.
    pub pending: Vec<Vec<f64>>,
    pub noise_var: f64,
    pub last_loss: Option<f64>,
}

impl MlpLearner {
    pub fn new(config: MlpLearnerConfig, validation: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        config.optimizer.validate()?;
        if config.input_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::Precondition("network dimensions must be positive".into()));
        }
        if let SupervisedHead::Classification { classes } = config.head {
            if classes < 2 {
                return Err(Error::Precondition("classification needs at least two classes".into()));
            }
        }
        Ok(Self { config, validation })
    }

    pub fn output_dim(&self) -> usize {
        match self.config.head {
            SupervisedHead::Regression => 1,
            SupervisedHead::Classification { classes } => classes,
        }
    }

    pub fn num_params(&self) -> usize {
        Mlp::num_params(self.config.input_dim, self.config.hidden_dim, self.output_dim())
    }

    /// A state with the given network and fresh optimizer buffers.
    pub fn state_from_net(&self, net: Mlp) -> MlpLearnerState {
        MlpLearnerState {
            optimizer: self.config.optimizer.init_state(net.params.len()),
            net,
            pending: Vec::new(),
            noise_var: self.config.initial_noise_var,
            last_loss: None,
        }
    }

    fn batch_loss(&self, net: &Mlp, inputs: &[Vec<f64>], targets: &[Target], with_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        match self.config.head {
            SupervisedHead::Regression => {
                let ys: Vec<Vec<f64>> = targets.iter().map(|t| vec![t.as_real()]).collect();
                if with_grad {
                    let (l, g) = mlp_gradient(net, inputs, Labels::Real(&ys))?;
                    Ok((l, Some(g)))
                } else {
                    Ok((mlp_loss(net, inputs, Labels::Real(&ys))?, None))
                }
            }
            SupervisedHead::Classification { .. } => {
                let cs = targets
                    .iter()
                    .map(|t| match t {
                        Target::Class(c) => Ok(*c),
                        Target::Real(_) => Err(Error::Interface("real target for a classifier".into())),
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if with_grad {
                    let (l, g) = mlp_gradient(net, inputs, Labels::Class(&cs))?;
                    Ok((l, Some(g)))
                } else {
                    Ok((mlp_loss(net, inputs, Labels::Class(&cs))?, None))
                }
            }
        }
    }
}

impl PointPredictor for MlpLearner {
    type State = MlpLearnerState;

    fn point_predict(&self, state: &MlpLearnerState, input: &[f64]) -> Result<f64> {
        Ok(state.net.forward(input)?[0])
    }
}

impl Learner for MlpLearner {
    type State = MlpLearnerState;

    fn interface(&self) -> Interface {
        Interface {
            observation: ObservationSpace::Supervised { input_dim: self.config.input_dim },
            output: match self.config.head {
                SupervisedHead::Regression => OutputSpace::Real,
                SupervisedHead::Classification { classes } => OutputSpace::Classes(classes),
            },
        }
    }

    fn init_state(&self, rng: &mut StreamRng) -> Result<MlpLearnerState> {
        let net = Mlp::init(self.config.input_dim, self.config.hidden_dim, self.output_dim(), rng);
        Ok(self.state_from_net(net))
    }

    fn predict(&self, state: &MlpLearnerState, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        inputs
            .iter()
            .map(|x| {
                let out = state.net.forward(x)?;
                Ok(match self.config.head {
                    SupervisedHead::Regression => PredictiveDistribution::Gaussian { mean: out[0], var: state.noise_var },
                    SupervisedHead::Classification { .. } => PredictiveDistribution::Categorical(softmax(&out)),
                })
            })
            .collect()
    }

    fn learn(&self, state: &MlpLearnerState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<MlpLearnerState> {
        let (inputs, targets) = supervised_parts(obs)?;
        let mut next = state.clone();
        if let (Some(targets), false) = (targets, state.pending.is_empty()) {
            if targets.len() != state.pending.len() {
                return Err(Error::Precondition(format!(
                    "{} targets for {} pending inputs",
                    targets.len(),
                    state.pending.len()
                )));
            }
            let (loss, grad) = self.batch_loss(&state.net, &state.pending, targets, true)?;
            let grad = grad.expect("gradient requested");
            self.config.optimizer.apply(&mut next.optimizer, &mut next.net.params, &grad)?;
            next.last_loss = Some(loss);
        }
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn infer(&self, state: &MlpLearnerState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<MlpLearnerState> {
        let (inputs, _) = supervised_parts(obs)?;
        let mut next = state.clone();
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn is_finite(&self, state: &MlpLearnerState) -> bool {
        state.net.is_finite() && state.optimizer.is_finite()
    }

    fn step_loss(&self, state: &MlpLearnerState) -> Option<f64> {
        state.last_loss
    }

    fn evaluate_loss(&self, state: &MlpLearnerState, data: &[(Vec<f64>, Target)]) -> Option<f64> {
        if data.is_empty() {
            return None;
        }
        let xs: Vec<Vec<f64>> = data.iter().map(|(x, _)| x.clone()).collect();
        let ts: Vec<Target> = data.iter().map(|(_, t)| t.clone()).collect();
        self.batch_loss(&state.net, &xs, &ts, false).ok().map(|(l, _)| l)
    }

    fn prepare_estimate(&self, state: &MlpLearnerState) -> Result<MlpLearnerState> {
        let mut s = state.clone();
        if self.config.head == SupervisedHead::Regression && !self.validation.is_empty() {
            s.noise_var = fit_residual_variance(self, state, &self.validation)?;
        }
        Ok(s)
    }
}

//! Bayesian linear regression: exact conjugate updates, a diagonal Gaussian
//! variational approximation trained by reparameterized gradients, and a
//! gradient-descent point estimate.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{resolve_pending, supervised_parts};
use crate::error::{Error, Result};
use crate::predictive::PredictiveDistribution;
use crate::process::{Interface, Learner, Observation, ObservationSpace, Output, OutputSpace, Target};
use crate::rng::StreamRng;

/// Smallest variational variance.
pub const VARIATIONAL_VARIANCE_FLOOR: f64 = 1e-8;

/// Feature map `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMap {
    /// `φ(x) = x`.
    Identity { dim: usize },
    /// `φ(x) = (1, x, x², …, x^degree)` for scalar `x`.
    Polynomial { degree: usize },
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match *self {
            FeatureMap::Identity { dim } => dim,
            FeatureMap::Polynomial { degree } => degree + 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            FeatureMap::Identity { dim } => dim,
            FeatureMap::Polynomial { .. } => 1,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Interface(format!("input of length {} for feature map {self:?}", x.len())));
        }
        Ok(match *self {
            FeatureMap::Identity { .. } => x.to_vec(),
            FeatureMap::Polynomial { degree } => (0..=degree).map(|p| x[0].powi(p as i32)).collect(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn regression_interface(features: &FeatureMap) -> Interface {
    Interface {
        observation: ObservationSpace::Supervised { input_dim: features.input_dim() },
        output: OutputSpace::Real,
    }
}

fn real_pairs(pairs: Vec<(Vec<f64>, Target)>) -> Vec<(Vec<f64>, f64)> {
    pairs.into_iter().map(|(x, t)| (x, t.as_real())).collect()
}

/// Settings shared by the conjugate learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    pub features: FeatureMap,
    /// Prior `N(0, prior_variance · I)`.
    pub prior_variance: f64,
    pub noise_variance: f64,
}

/// Exact conjugate Bayesian linear regression.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinReg {
    pub config: BayesConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinRegState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub pending: Vec<Vec<f64>>,
    pub last_loss: Option<f64>,
}

impl BayesLinReg {
    pub fn new(config: BayesConfig) -> Result<Self> {
        if !(config.prior_variance > 0.0) || !(config.noise_variance > 0.0) {
            return Err(Error::Domain("prior and noise variances must be positive".into()));
        }
        Ok(Self { config })
    }

    pub fn prior(&self) -> BayesLinRegState {
        let d = self.config.features.dim();
        BayesLinRegState {
            mean: DVector::zeros(d),
            cov: DMatrix::identity(d, d) * self.config.prior_variance,
            pending: Vec::new(),
            last_loss: None,
        }
    }

    /// Posterior after conditioning on `data` in order.
    pub fn posterior(&self, data: &[(Vec<f64>, f64)]) -> Result<BayesLinRegState> {
        data.iter().try_fold(self.prior(), |s, (x, y)| bayes_update(&self.config, &s, x, *y))
    }

    /// `N(φᵀμ, φᵀΣφ + σ_n²)`.
    pub fn predictive(&self, state: &BayesLinRegState, x: &[f64]) -> Result<(f64, f64)> {
        let phi = DVector::from_vec(self.config.features.apply(x)?);
        let mean = phi.dot(&state.mean);
        let var = (state.cov.clone() * &phi).dot(&phi) + self.config.noise_variance;
        Ok((mean, var))
    }
}

/// Rank-one conjugate update on `(x, y)`.
pub fn bayes_update(config: &BayesConfig, state: &BayesLinRegState, x: &[f64], y: f64) -> Result<BayesLinRegState> {
    let phi = DVector::from_vec(config.features.apply(x)?);
    let s_phi = &state.cov * &phi;
    let s = phi.dot(&s_phi) + config.noise_variance;
    if !(s > 0.0) {
        return Err(Error::NumericalDivergence("non-positive innovation variance".into()));
    }
    let gain = &s_phi / s;
    let resid = y - phi.dot(&state.mean);
    let mean = &state.mean + &gain * resid;
    let mut cov = &state.cov - &gain * s_phi.transpose();
    cov = (&cov + cov.transpose()) * 0.5;
    if cov.clone().cholesky().is_none() {
        return Err(Error::NumericalDivergence("posterior covariance lost positive definiteness".into()));
    }
    Ok(BayesLinRegState { mean, cov, pending: state.pending.clone(), last_loss: state.last_loss })
}

impl Learner for BayesLinReg {
    type State = BayesLinRegState;

    fn interface(&self) -> Interface {
        regression_interface(&self.config.features)
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<BayesLinRegState> {
        Ok(self.prior())
    }

    fn predict(&self, state: &BayesLinRegState, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        inputs
            .iter()
            .map(|x| self.predictive(state, x).map(|(mean, var)| PredictiveDistribution::Gaussian { mean, var }))
            .collect()
    }

    fn learn(&self, state: &BayesLinRegState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<BayesLinRegState> {
        let (inputs, targets) = supervised_parts(obs)?;
        let mut next = state.clone();
        if let Some(pairs) = resolve_pending(&state.pending, targets)? {
            let pairs = real_pairs(pairs);
            let loss = pairs
                .iter()
                .map(|(x, y)| self.predictive(state, x).map(|(m, _)| (m - y) * (m - y)))
                .sum::<Result<f64>>()?
                / pairs.len() as f64;
            for (x, y) in &pairs {
                next = bayes_update(&self.config, &next, x, *y)?;
            }
            next.last_loss = Some(loss);
        }
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn infer(&self, state: &BayesLinRegState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<BayesLinRegState> {
        let (inputs, _) = supervised_parts(obs)?;
        let mut next = state.clone();
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn is_finite(&self, state: &BayesLinRegState) -> bool {
        state.mean.iter().chain(state.cov.iter()).all(|v| v.is_finite())
    }

    fn step_loss(&self, state: &BayesLinRegState) -> Option<f64> {
        state.last_loss
    }
}

/// Settings for the diagonal Gaussian variational learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalConfig {
    pub features: FeatureMap,
    pub prior_variance: f64,
    pub noise_variance: f64,
    pub lr: f64,
    /// Number of observations the KL term is amortized over.
    pub dataset_size: usize,
}

/// `q(θ) = N(m, diag(exp ρ))` trained by one reparameterized ELBO step per update.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalLinReg {
    pub config: VariationalConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
    pub pending: Vec<Vec<f64>>,
    pub last_loss: Option<f64>,
}

/// Negative ELBO estimate and its gradients `(loss, ∂m, ∂ρ)` for fixed noise `eps`.
///
/// `loss = Σ (y − θᵀφ)² / (2σ²) + KL(q ‖ prior) / N` with `θ = m + exp(ρ/2)·eps`.
pub fn elbo_loss_and_grad(
    config: &VariationalConfig,
    mean: &[f64],
    log_var: &[f64],
    batch: &[(Vec<f64>, f64)],
    eps: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let d = mean.len();
    let s0 = config.prior_variance;
    let n = config.dataset_size.max(1) as f64;
    let std: Vec<f64> = log_var.iter().map(|r| (0.5 * r).exp()).collect();
    let theta: Vec<f64> = (0..d).map(|i| mean[i] + std[i] * eps[i]).collect();
    let mut g_theta = vec![0.0; d];
    let mut loss = 0.0;
    for (x, y) in batch {
        let phi = config.features.apply(x)?;
        let r = y - dot(&theta, &phi);
        loss += r * r / (2.0 * config.noise_variance);
        for i in 0..d {
            g_theta[i] -= r * phi[i] / config.noise_variance;
        }
    }
    let mut kl = 0.0;
    let mut g_mean = vec![0.0; d];
    let mut g_lv = vec![0.0; d];
    for i in 0..d {
        let v = log_var[i].exp();
        kl += 0.5 * (v / s0 + mean[i] * mean[i] / s0 - 1.0 - log_var[i] + s0.ln());
        g_mean[i] = g_theta[i] + mean[i] / (s0 * n);
        g_lv[i] = g_theta[i] * eps[i] * 0.5 * std[i] + 0.5 * (v / s0 - 1.0) / n;
    }
    loss += kl / n;
    if !loss.is_finite() {
        return Err(Error::NumericalDivergence("non-finite ELBO".into()));
    }
    Ok((loss, g_mean, g_lv))
}

impl VariationalLinReg {
    pub fn new(config: VariationalConfig) -> Result<Self> {
        if !(config.prior_variance > 0.0) || !(config.noise_variance > 0.0) || !(config.lr > 0.0) {
            return Err(Error::Domain("variances and learning rate must be positive".into()));
        }
        Ok(Self { config })
    }

    pub fn prior(&self) -> VariationalState {
        let d = self.config.features.dim();
        VariationalState {
            mean: vec![0.0; d],
            log_var: vec![self.config.prior_variance.ln(); d],
            pending: Vec::new(),
            last_loss: None,
        }
    }

    /// One gradient step on the negative ELBO for `batch` (possibly empty).
    pub fn variational_step(&self, state: &VariationalState, batch: &[(Vec<f64>, f64)], rng: &mut StreamRng) -> Result<VariationalState> {
        let eps: Vec<f64> = (0..state.mean.len()).map(|_| StandardNormal.sample(rng)).collect();
        let (loss, gm, gl) = elbo_loss_and_grad(&self.config, &state.mean, &state.log_var, batch, &eps)?;
        let mut next = state.clone();
        let floor = VARIATIONAL_VARIANCE_FLOOR.ln();
        for i in 0..next.mean.len() {
            next.mean[i] -= self.config.lr * gm[i];
            next.log_var[i] = (next.log_var[i] - self.config.lr * gl[i]).max(floor);
        }
        next.last_loss = Some(loss);
        Ok(next)
    }

    pub fn predictive(&self, state: &VariationalState, x: &[f64]) -> Result<(f64, f64)> {
        let phi = self.config.features.apply(x)?;
        let var: f64 = phi.iter().zip(&state.log_var).map(|(p, r)| p * p * r.exp()).sum();
        Ok((dot(&phi, &state.mean), var + self.config.noise_variance))
    }
}

impl Learner for VariationalLinReg {
    type State = VariationalState;

    fn interface(&self) -> Interface {
        regression_interface(&self.config.features)
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<VariationalState> {
        Ok(self.prior())
    }

    fn predict(&self, state: &VariationalState, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        inputs
            .iter()
            .map(|x| self.predictive(state, x).map(|(mean, var)| PredictiveDistribution::Gaussian { mean, var }))
            .collect()
    }

    fn learn(&self, state: &VariationalState, obs: &Observation, _out: &Output, rng: &mut StreamRng) -> Result<VariationalState> {
        let (inputs, targets) = supervised_parts(obs)?;
        let mut next = match resolve_pending(&state.pending, targets)? {
            Some(pairs) => self.variational_step(state, &real_pairs(pairs), rng)?,
            None => state.clone(),
        };
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn infer(&self, state: &VariationalState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<VariationalState> {
        let (inputs, _) = supervised_parts(obs)?;
        let mut next = state.clone();
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn is_finite(&self, state: &VariationalState) -> bool {
        state.mean.iter().chain(&state.log_var).all(|v| v.is_finite())
    }

    fn step_loss(&self, state: &VariationalState) -> Option<f64> {
        state.last_loss
    }
}

/// Settings for the gradient-descent point estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub features: FeatureMap,
    /// Variance of the Gaussian predictive around `θᵀφ(x)`.
    pub noise_variance: f64,
    pub lr: f64,
}

/// `θ ← θ − lr · ∇ mean ½(θᵀφ − y)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimateLinReg {
    pub config: PointConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointState {
    pub theta: Vec<f64>,
    pub pending: Vec<Vec<f64>>,
    pub last_loss: Option<f64>,
}

impl PointEstimateLinReg {
    pub fn new(config: PointConfig) -> Result<Self> {
        if !(config.noise_variance > 0.0) || !(config.lr > 0.0) {
            return Err(Error::Domain("noise variance and learning rate must be positive".into()));
        }
        Ok(Self { config })
    }

    pub fn initial(&self) -> PointState {
        PointState { theta: vec![0.0; self.config.features.dim()], pending: Vec::new(), last_loss: None }
    }

    /// Mean squared-error loss and gradient on `batch`.
    pub fn loss_and_grad(&self, theta: &[f64], batch: &[(Vec<f64>, f64)]) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; theta.len()];
        let mut loss = 0.0;
        let n = batch.len().max(1) as f64;
        for (x, y) in batch {
            let phi = self.config.features.apply(x)?;
            let r = dot(theta, &phi) - y;
            loss += 0.5 * r * r / n;
            for i in 0..g.len() {
                g[i] += r * phi[i] / n;
            }
        }
        Ok((loss, g))
    }

    pub fn point_step(&self, state: &PointState, batch: &[(Vec<f64>, f64)]) -> Result<PointState> {
        let (loss, g) = self.loss_and_grad(&state.theta, batch)?;
        let mut next = state.clone();
        for (t, gi) in next.theta.iter_mut().zip(&g) {
            *t -= self.config.lr * gi;
        }
        next.last_loss = Some(loss);
        Ok(next)
    }
}

impl Learner for PointEstimateLinReg {
    type State = PointState;

    fn interface(&self) -> Interface {
        regression_interface(&self.config.features)
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<PointState> {
        Ok(self.initial())
    }

    fn predict(&self, state: &PointState, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        inputs
            .iter()
            .map(|x| {
                let phi = self.config.features.apply(x)?;
                Ok(PredictiveDistribution::Gaussian { mean: dot(&phi, &state.theta), var: self.config.noise_variance })
            })
            .collect()
    }

    fn learn(&self, state: &PointState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<PointState> {
        let (inputs, targets) = supervised_parts(obs)?;
        let mut next = match resolve_pending(&state.pending, targets)? {
            Some(pairs) => self.point_step(state, &real_pairs(pairs))?,
            None => state.clone(),
        };
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn infer(&self, state: &PointState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<PointState> {
        let (inputs, _) = supervised_parts(obs)?;
        let mut next = state.clone();
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn is_finite(&self, state: &PointState) -> bool {
        state.theta.iter().all(|v| v.is_finite())
    }

    fn step_loss(&self, state: &PointState) -> Option<f64> {
        state.last_loss
    }
}

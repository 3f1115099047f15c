//! Induced futures: hybrid observations and finite-horizon rollouts.

use crate::error::{Error, Result};
use crate::predictive::PredictiveDistribution;
use crate::process::{Environment, History, Interface, Learner, Observation, Output};
use crate::rng::StreamRng;

/// `q_e`: the base environment with learner outputs standing in for targets.
///
/// Borrowed components (input marginals, dynamics) are taken from the base
/// environment as it was at `anchor_time`, the last real time step.
#[derive(Debug, Clone, Copy)]
pub struct HybridEnvironment<'a, E> {
    base: &'a E,
    anchor_time: usize,
}

impl<'a, E: Environment> HybridEnvironment<'a, E> {
    pub fn new(base: &'a E, anchor_time: usize) -> Self {
        Self { base, anchor_time }
    }

    pub fn anchor_time(&self) -> usize {
        self.anchor_time
    }
}

impl<E: Environment> Environment for HybridEnvironment<'_, E> {
    fn interface(&self) -> Interface {
        self.base.interface()
    }

    fn initial(&self, rng: &mut StreamRng) -> Result<Observation> {
        self.base.initial(rng)
    }

    fn next(&self, history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        self.base.hybrid_next(self.anchor_time, history, output, rng)
    }

    fn hybrid_next(&self, anchor: usize, history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        self.base.hybrid_next(anchor, history, output, rng)
    }
}

/// Which update drives a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    /// `u'`: beliefs frozen.
    Inference,
    /// `u`: the learner keeps learning from its own targets.
    Learning,
}

/// A simulated future of `horizon` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FuturesRollout<S> {
    pub future_history: History,
    pub terminal_state: S,
    pub mode: RolloutMode,
}

/// One futures step: `Y^s ~ q_f(· | Z^{s-1}, X^{s-1})`, `X^s ~ q_e(· | H, Y^s)`.
pub fn hybrid_next<E: Environment, L: Learner>(
    learner: &L,
    hybrid: &HybridEnvironment<'_, E>,
    state: &L::State,
    history: &History,
    rng: &mut StreamRng,
) -> Result<(Output, Observation)> {
    let prev = history.last_observation()?;
    let output = learner.sample_output(state, prev, rng)?;
    let obs = hybrid.next(history, &output, rng)?;
    Ok((output, obs))
}

/// Roll the learner forward `horizon` steps against the hybrid environment,
/// calling `observe(s, Z^s)` after each step. The live state and history are
/// only read.
pub fn rollout_with<E, L, F>(
    learner: &L,
    env: &E,
    state: &L::State,
    history: &History,
    horizon: usize,
    mode: RolloutMode,
    rng: &mut StreamRng,
    mut observe: F,
) -> Result<FuturesRollout<L::State>>
where
    E: Environment,
    L: Learner,
    F: FnMut(usize, &L::State) -> Result<()>,
{
    if horizon == 0 {
        return Err(Error::Precondition("rollout horizon must be at least 1".into()));
    }
    let hybrid = HybridEnvironment::new(env, history.time());
    let mut local = history.tail();
    if local.is_empty() {
        return Err(Error::Precondition("rollout needs a non-empty history".into()));
    }
    let mut z = state.clone();
    for s in 1..=horizon {
        let (y, x) = hybrid_next(learner, &hybrid, &z, &local, rng).map_err(|e| e.at_step(s))?;
        z = match mode {
            RolloutMode::Learning => learner.learn(&z, &x, &y, rng),
            RolloutMode::Inference => learner.infer(&z, &x, &y, rng),
        }
        .map_err(|e| e.at_step(s))?;
        if !learner.is_finite(&z) {
            return Err(Error::NumericalDivergence("non-finite particle state".into()).at_step(s));
        }
        local.push(x, y);
        observe(s, &z)?;
    }
    Ok(FuturesRollout { future_history: local.skip(1), terminal_state: z, mode })
}

/// [`rollout_with`] without an observer.
pub fn rollout<E: Environment, L: Learner>(
    learner: &L,
    env: &E,
    state: &L::State,
    history: &History,
    horizon: usize,
    mode: RolloutMode,
    rng: &mut StreamRng,
) -> Result<FuturesRollout<L::State>> {
    rollout_with(learner, env, state, history, horizon, mode, rng, |_, _| Ok(()))
}

/// Fixed probe observations on which induced futures are compared.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalProbe {
    points: Vec<Observation>,
}

impl EvalProbe {
    pub fn new(points: Vec<Observation>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("empty probe set".into()));
        }
        Ok(Self { points })
    }

    /// One supervised observation per input vector.
    pub fn from_inputs(inputs: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            inputs
                .iter()
                .map(|x| Observation::SupervisedPair { inputs: vec![x.clone()], prev_targets: None })
                .collect(),
        )
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }
}

/// One predictive distribution per probe component.
pub fn probe_predictives<L: Learner>(
    learner: &L,
    state: &L::State,
    probes: &EvalProbe,
) -> Result<Vec<PredictiveDistribution>> {
    let mut out = Vec::with_capacity(probes.points.len());
    for p in &probes.points {
        out.extend(learner.predict(state, p)?);
    }
    Ok(out)
}

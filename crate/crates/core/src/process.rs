//! Environment and learner roles and the learning-mode interaction process.
//!
//! Time zero is stored as `(X_0, Output::Null)` so a [`History`] is always a
//! sequence of observation/output pairs. At each later step the learner samples
//! `Y_t` from its prediction for `X_{t-1}`, the environment samples `X_t` given
//! the history and `Y_t`, and the learner updates its state on `(X_t, Y_t)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictive::{sample, PredictiveDistribution, Value};
use crate::rng::{SeedTree, StreamRng};

/// A supervised target or a sampled learner output component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Real(f64),
    Class(usize),
}

impl Target {
    pub fn as_real(&self) -> f64 {
        match self {
            Target::Real(v) => *v,
            Target::Class(c) => *c as f64,
        }
    }
}

/// What the learner observes at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    /// Current inputs together with the targets of the previous inputs.
    /// A minibatch is a list of inputs; `prev_targets` is absent at time zero.
    SupervisedPair { inputs: Vec<Vec<f64>>, prev_targets: Option<Vec<Target>> },
    /// A reinforcement-learning signal. `reward` is `None` when the reward is
    /// withheld and the learner must supply a self-consistent value target.
    RlSignal { state: Vec<f64>, reward: Option<f64>, terminal: bool, episode_step: usize },
    /// Data samples for a generative learner.
    GenSample { samples: Vec<Vec<f64>> },
}

/// What the learner emits at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Output {
    /// Placeholder paired with `X_0`.
    Null,
    PredictedTargets(Vec<Target>),
    Action(usize),
    GeneratedSamples(Vec<Vec<f64>>),
}

/// Shape of the observation space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservationSpace {
    Supervised { input_dim: usize },
    Rl { state_dim: usize },
    Generative { dim: usize },
}

/// Shape of the output space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputSpace {
    Real,
    Classes(usize),
    Actions(usize),
    Samples { dim: usize },
}

/// An interface `(𝒳, 𝒴)` shared by an environment and a learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub observation: ObservationSpace,
    pub output: OutputSpace,
}

impl Interface {
    pub fn check_observation(&self, obs: &Observation) -> Result<()> {
        let bad = |what: String| Err(Error::Interface(what));
        match (self.observation, obs) {
            (ObservationSpace::Supervised { input_dim }, Observation::SupervisedPair { inputs, prev_targets }) => {
                if let Some(x) = inputs.iter().find(|x| x.len() != input_dim) {
                    return bad(format!("input of dimension {} on a {input_dim}-d interface", x.len()));
                }
                if inputs.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("non-finite input".into());
                }
                if let Some(ts) = prev_targets {
                    for t in ts {
                        match (t, self.output) {
                            (Target::Class(c), OutputSpace::Classes(n)) if *c >= n => {
                                return bad(format!("class {c} outside {n} classes"))
                            }
                            (Target::Real(v), _) if !v.is_finite() => return bad("non-finite target".into()),
                            _ => {}
                        }
                    }
                }
                Ok(())
            }
            (ObservationSpace::Rl { state_dim }, Observation::RlSignal { state, reward, .. }) => {
                if state.len() != state_dim {
                    return bad(format!("state of dimension {} on a {state_dim}-d interface", state.len()));
                }
                if reward.is_some_and(|r| !r.is_finite()) {
                    return bad("non-finite reward".into());
                }
                Ok(())
            }
            (ObservationSpace::Generative { dim }, Observation::GenSample { samples }) => {
                match samples.iter().find(|s| s.len() != dim) {
                    Some(s) => bad(format!("sample of dimension {} on a {dim}-d interface", s.len())),
                    None => Ok(()),
                }
            }
            (space, _) => bad(format!("observation kind does not match {space:?}")),
        }
    }

    pub fn check_output(&self, out: &Output) -> Result<()> {
        match (self.output, out) {
            (_, Output::Null) => Ok(()),
            (OutputSpace::Actions(n), Output::Action(a)) if *a < n => Ok(()),
            (OutputSpace::Classes(n), Output::PredictedTargets(ts)) => {
                if ts.iter().all(|t| matches!(t, Target::Class(c) if *c < n)) {
                    Ok(())
                } else {
                    Err(Error::Interface(format!("output outside {n} classes")))
                }
            }
            (OutputSpace::Real, Output::PredictedTargets(ts)) => {
                if ts.iter().all(|t| matches!(t, Target::Real(_))) {
                    Ok(())
                } else {
                    Err(Error::Interface("class output on a real-valued interface".into()))
                }
            }
            (OutputSpace::Samples { dim }, Output::GeneratedSamples(s)) if s.iter().all(|x| x.len() == dim) => Ok(()),
            (space, out) => Err(Error::Interface(format!("output {out:?} does not fit {space:?}"))),
        }
    }
}

/// An ordered sequence of `(observation, output)` pairs starting at `origin_time`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    origin_time: usize,
    steps: Vec<(Observation, Output)>,
}

impl History {
    /// A history holding only `(X_0, Null)`.
    pub fn start(x0: Observation) -> Self {
        Self { origin_time: 0, steps: vec![(x0, Output::Null)] }
    }

    pub fn with_origin(origin_time: usize) -> Self {
        Self { origin_time, steps: Vec::new() }
    }

    /// The last step only, keeping its time index.
    pub fn tail(&self) -> Self {
        match self.steps.last() {
            Some(s) => Self { origin_time: self.time(), steps: vec![s.clone()] },
            None => self.clone(),
        }
    }

    pub fn origin_time(&self) -> usize {
        self.origin_time
    }

    /// Time index of the last step.
    pub fn time(&self) -> usize {
        (self.origin_time + self.steps.len()).saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&(Observation, Output)> {
        self.steps.last()
    }

    pub fn last_observation(&self) -> Result<&Observation> {
        self.steps
            .last()
            .map(|(x, _)| x)
            .ok_or_else(|| Error::Precondition("empty history".into()))
    }

    pub fn push(&mut self, obs: Observation, out: Output) {
        self.steps.push((obs, out));
    }

    pub fn steps(&self) -> &[(Observation, Output)] {
        &self.steps
    }

    /// Steps after the first `n`, re-based accordingly.
    pub fn skip(&self, n: usize) -> Self {
        Self {
            origin_time: self.origin_time + n,
            steps: self.steps.iter().skip(n).cloned().collect(),
        }
    }
}

/// Environment `(e, p_{X_0})`.
///
/// Sampling must depend only on the history, the output and the generator
/// passed in, so that identical generator states reproduce identical draws.
pub trait Environment: Send + Sync {
    fn interface(&self) -> Interface;

    /// `X_0 ~ p_{X_0}`.
    fn initial(&self, rng: &mut StreamRng) -> Result<Observation>;

    /// `X_t ~ p_e(· | H_{0:t-1}, Y_t)`.
    fn next(&self, history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation>;

    /// Hybrid draw used in induced futures: the learner's output stands in for
    /// the modelled part of the observation and the rest is borrowed from the
    /// environment as it was at `anchor_time`.
    fn hybrid_next(
        &self,
        anchor_time: usize,
        history: &History,
        output: &Output,
        rng: &mut StreamRng,
    ) -> Result<Observation>;
}

/// Learner `(𝒵, f, u, u', p_{Z_0})`.
///
/// The role object holds hyperparameters; [`Learner::State`] is the cloneable
/// state `Z_t`. Updates take the state by reference and return a new one.
pub trait Learner: Send + Sync {
    type State: Clone + Send + Sync + PartialEq + std::fmt::Debug;

    fn interface(&self) -> Interface;

    /// `Z_0 ~ p_{Z_0}`.
    fn init_state(&self, rng: &mut StreamRng) -> Result<Self::State>;

    /// `q_f(· | z, x)`, one factor per output component of `x`.
    fn predict(&self, state: &Self::State, obs: &Observation) -> Result<Vec<PredictiveDistribution>>;

    /// Draw `Y ~ q_f(· | z, x)`.
    fn sample_output(&self, state: &Self::State, obs: &Observation, rng: &mut StreamRng) -> Result<Output> {
        let draws: Vec<Value> = self.predict(state, obs)?.iter().map(|d| sample(d, rng)).collect();
        if draws.iter().any(|v| matches!(v, Value::Vector(_))) {
            return Ok(Output::GeneratedSamples(
                draws
                    .into_iter()
                    .map(|v| match v {
                        Value::Vector(v) => v,
                        Value::Real(x) => vec![x],
                        Value::Class(c) => vec![c as f64],
                    })
                    .collect(),
            ));
        }
        Ok(Output::PredictedTargets(
            draws
                .into_iter()
                .map(|v| match v {
                    Value::Class(c) => Target::Class(c),
                    Value::Real(x) => Target::Real(x),
                    Value::Vector(_) => unreachable!(),
                })
                .collect(),
        ))
    }

    /// Learning-mode update `u`.
    fn learn(&self, state: &Self::State, obs: &Observation, out: &Output, rng: &mut StreamRng) -> Result<Self::State>;

    /// Inference-mode update `u'`: auxiliary components may move, predictive
    /// parameters stay fixed.
    fn infer(&self, state: &Self::State, obs: &Observation, out: &Output, rng: &mut StreamRng) -> Result<Self::State>;

    fn is_finite(&self, _state: &Self::State) -> bool {
        true
    }

    /// Loss reported by the most recent learning update, if any.
    fn step_loss(&self, _state: &Self::State) -> Option<f64> {
        None
    }

    /// Loss of the current state on a labelled set.
    fn evaluate_loss(&self, _state: &Self::State, _data: &[(Vec<f64>, Target)]) -> Option<f64> {
        None
    }

    /// Copy of `state` prepared for a forgetting estimate (for example with a
    /// refreshed predictive variance). The live state is never touched.
    fn prepare_estimate(&self, state: &Self::State) -> Result<Self::State> {
        Ok(state.clone())
    }

    /// True when inference-mode updates can move predictions because the
    /// prediction reads auxiliary state (counters, parity bits).
    fn predictions_follow_auxiliary_state(&self) -> bool {
        false
    }
}

/// Sparse set of times at which the driver keeps a full state clone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SnapshotSchedule {
    times: BTreeSet<usize>,
}

impl SnapshotSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn at(times: impl IntoIterator<Item = usize>) -> Self {
        Self { times: times.into_iter().collect() }
    }

    /// Every `every` steps starting at zero, plus the final step.
    pub fn every(every: usize, total_steps: usize) -> Self {
        let every = every.max(1);
        let mut times: BTreeSet<usize> = (0..=total_steps).step_by(every).collect();
        times.insert(total_steps);
        Self { times }
    }

    pub fn contains(&self, t: usize) -> bool {
        self.times.contains(&t)
    }

    pub fn times(&self) -> impl Iterator<Item = usize> + '_ {
        self.times.iter().copied()
    }
}

/// Per-step scalar metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    pub loss: Option<f64>,
    pub reward: Option<f64>,
}

/// Record of one learning-mode run.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTrace<S> {
    pub history: History,
    pub snapshots: BTreeMap<usize, S>,
    pub metrics: Vec<StepMetrics>,
    pub final_state: S,
}

impl<S> InteractionTrace<S> {
    /// Number of learning steps taken (the bootstrap pair is not a step).
    pub fn num_steps(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

/// Check that a learner and environment speak the same interface.
pub fn check_interfaces<E: Environment, L: Learner>(env: &E, learner: &L) -> Result<Interface> {
    let (a, b) = (env.interface(), learner.interface());
    if a != b {
        return Err(Error::Interface(format!("environment {a:?} vs learner {b:?}")));
    }
    Ok(a)
}

/// One step of the interaction process.
///
/// Returns `(X_t, Y_t, Z_t)` and appends `(X_t, Y_t)` to `history`. Streams for
/// step `t` are drawn from `seeds` under the labels `output`, `env`, `update`.
pub fn step_interaction<E: Environment, L: Learner>(
    env: &E,
    learner: &L,
    state: &L::State,
    history: &mut History,
    seeds: &SeedTree,
) -> Result<(Observation, Output, L::State)> {
    let interface = check_interfaces(env, learner)?;
    let t = history.time() + 1;
    let prev = history.last_observation()?;
    let output = learner.sample_output(state, prev, &mut seeds.rng("output", t as u64))?;
    interface.check_output(&output)?;
    let obs = env.next(history, &output, &mut seeds.rng("env", t as u64))?;
    interface.check_observation(&obs)?;
    let next = learner.learn(state, &obs, &output, &mut seeds.rng("update", t as u64))?;
    if !learner.is_finite(&next) {
        return Err(Error::NumericalDivergence(format!("non-finite learner state after step {t}")));
    }
    history.push(obs.clone(), output.clone());
    Ok((obs, output, next))
}

/// Run `total_steps` learning-mode steps from freshly sampled `Z_0`, `X_0`.
///
/// `observe` is called with `(t, Z_t, H_{0:t})` after every step, including
/// `t = 0`; it draws no randomness from the run's streams, so instrumentation
/// cannot perturb the trajectory.
pub fn run_interaction_with<E, L, F>(
    env: &E,
    learner: &L,
    total_steps: usize,
    schedule: &SnapshotSchedule,
    seeds: &SeedTree,
    mut observe: F,
) -> Result<InteractionTrace<L::State>>
where
    E: Environment,
    L: Learner,
    F: FnMut(usize, &L::State, &History) -> Result<()>,
{
    if total_steps == 0 {
        return Err(Error::Precondition("total_steps must be at least 1".into()));
    }
    let interface = check_interfaces(env, learner)?;
    let mut state = learner.init_state(&mut seeds.rng("init-state", 0))?;
    let x0 = env.initial(&mut seeds.rng("init-obs", 0))?;
    interface.check_observation(&x0)?;
    let mut history = History::start(x0);
    let mut snapshots = BTreeMap::new();
    let mut metrics = vec![StepMetrics::default()];
    if schedule.contains(0) {
        snapshots.insert(0, state.clone());
    }
    observe(0, &state, &history).map_err(|e| e.at_step(0))?;
    for t in 1..=total_steps {
        let (obs, _, next) =
            step_interaction(env, learner, &state, &mut history, seeds).map_err(|e| e.at_step(t))?;
        state = next;
        let reward = match obs {
            Observation::RlSignal { reward, .. } => reward,
            _ => None,
        };
        metrics.push(StepMetrics { loss: learner.step_loss(&state), reward });
        if schedule.contains(t) {
            snapshots.insert(t, state.clone());
        }
        observe(t, &state, &history).map_err(|e| e.at_step(t))?;
    }
    Ok(InteractionTrace { history, snapshots, metrics, final_state: state })
}

/// [`run_interaction_with`] without an observer.
pub fn run_interaction<E: Environment, L: Learner>(
    env: &E,
    learner: &L,
    total_steps: usize,
    schedule: &SnapshotSchedule,
    seeds: &SeedTree,
) -> Result<InteractionTrace<L::State>> {
    run_interaction_with(env, learner, total_steps, schedule, seeds, |_, _, _| Ok(()))
}

//! Pole balancing on a cart with the standard benchmark constants.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{Environment, History, Interface, Observation, ObservationSpace, Output, OutputSpace};
use crate::rng::StreamRng;

/// Physical constants and episode limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartpoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub dt: f64,
    pub theta_threshold: f64,
    pub x_threshold: f64,
    pub max_episode_steps: usize,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            theta_threshold: 12.0f64.to_radians(),
            x_threshold: 2.4,
            max_episode_steps: 500,
        }
    }
}

/// State `(x, ẋ, θ, θ̇)`.
pub type CartpoleState = [f64; 4];

/// Accelerations `(ẍ, θ̈)` under horizontal force `f`.
pub fn cartpole_accelerations(p: &CartpoleParams, s: &CartpoleState, f: f64) -> (f64, f64) {
    let (_, _, theta, theta_dot) = (s[0], s[1], s[2], s[3]);
    let total = p.cart_mass + p.pole_mass;
    let pml = p.pole_mass * p.half_length;
    let (sin, cos) = theta.sin_cos();
    let temp = (f + pml * theta_dot * theta_dot * sin) / total;
    let theta_acc = (p.gravity * sin - cos * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total));
    let x_acc = temp - pml * theta_acc * cos / total;
    (x_acc, theta_acc)
}

/// One semi-implicit Euler step: velocities first, then positions.
/// Returns `(s′, reward, failed)` where `failed` reflects the angle and
/// position thresholds.
pub fn cartpole_step(p: &CartpoleParams, s: &CartpoleState, action: usize) -> Result<(CartpoleState, f64, bool)> {
    let f = match action {
        0 => -p.force,
        1 => p.force,
        a => return Err(Error::Domain(format!("cartpole action {a} not in {{0, 1}}"))),
    };
    cartpole_step_force(p, s, f)
}

/// [`cartpole_step`] with an arbitrary horizontal force.
pub fn cartpole_step_force(p: &CartpoleParams, s: &CartpoleState, f: f64) -> Result<(CartpoleState, f64, bool)> {
    let (xa, ta) = cartpole_accelerations(p, s, f);
    let x_dot = s[1] + p.dt * xa;
    let x = s[0] + p.dt * x_dot;
    let theta_dot = s[3] + p.dt * ta;
    let theta = s[2] + p.dt * theta_dot;
    let next = [x, x_dot, theta, theta_dot];
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDivergence("non-finite cartpole state".into()));
    }
    let failed = x.abs() > p.x_threshold || theta.abs() > p.theta_threshold;
    Ok((next, 1.0, failed))
}

/// Mechanical energy with the pole treated as a uniform rod.
pub fn cartpole_energy(p: &CartpoleParams, s: &CartpoleState) -> f64 {
    let (x_dot, theta, theta_dot) = (s[1], s[2], s[3]);
    let l = p.half_length;
    let kinetic = 0.5 * (p.cart_mass + p.pole_mass) * x_dot * x_dot
        + p.pole_mass * l * x_dot * theta_dot * theta.cos()
        + 0.5 * (4.0 / 3.0) * p.pole_mass * l * l * theta_dot * theta_dot;
    kinetic + p.pole_mass * p.gravity * l * theta.cos()
}

pub fn cartpole_reset(rng: &mut StreamRng) -> CartpoleState {
    std::array::from_fn(|_| rng.random_range(-0.05..0.05))
}

/// Cartpole as an interaction environment.
///
/// Observations carry the reward of the transition that produced them; the
/// step after a terminal observation starts a fresh episode with no reward.
/// Hybrid draws apply the same dynamics but withhold the reward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartpoleEnv {
    pub params: CartpoleParams,
}

impl CartpoleEnv {
    pub fn new(params: CartpoleParams) -> Self {
        Self { params }
    }

    fn advance(&self, history: &History, output: &Output, rng: &mut StreamRng, with_reward: bool) -> Result<Observation> {
        let (state, terminal, episode_step) = match history.last_observation()? {
            Observation::RlSignal { state, terminal, episode_step, .. } => (state, *terminal, *episode_step),
            other => return Err(Error::Interface(format!("cartpole history holds {other:?}"))),
        };
        if terminal {
            return Ok(self.fresh(rng));
        }
        let action = match output {
            Output::Action(a) => *a,
            other => return Err(Error::Interface(format!("cartpole needs an action, got {other:?}"))),
        };
        let s: CartpoleState = state
            .as_slice()
            .try_into()
            .map_err(|_| Error::Interface("cartpole state must have four components".into()))?;
        let (next, reward, failed) = cartpole_step(&self.params, &s, action)?;
        let step = episode_step + 1;
        Ok(Observation::RlSignal {
            state: next.to_vec(),
            reward: with_reward.then_some(reward),
            terminal: failed || step >= self.params.max_episode_steps,
            episode_step: step,
        })
    }

    fn fresh(&self, rng: &mut StreamRng) -> Observation {
        Observation::RlSignal { state: cartpole_reset(rng).to_vec(), reward: None, terminal: false, episode_step: 0 }
    }
}

impl Environment for CartpoleEnv {
    fn interface(&self) -> Interface {
        Interface { observation: ObservationSpace::Rl { state_dim: 4 }, output: OutputSpace::Actions(2) }
    }

    fn initial(&self, rng: &mut StreamRng) -> Result<Observation> {
        Ok(self.fresh(rng))
    }

    fn next(&self, history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        self.advance(history, output, rng, true)
    }

    fn hybrid_next(&self, _anchor: usize, history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        self.advance(history, output, rng, false)
    }
}

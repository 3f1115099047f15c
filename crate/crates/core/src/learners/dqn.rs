//! Deep Q-learning with an ε-greedy behaviour policy, a uniform replay buffer
//! and a periodically synchronised target network.
//!
//! The learner forms transitions from consecutive observations: the action
//! it emitted, the reward carried by the new observation and the terminal
//! flag. When the reward is withheld (hybrid futures) the transition is
//! stored with a fixed regression target equal to the current online
//! estimate `Q(s, a)`, so self-generated experience never injects new
//! information about returns.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{softmax, Mlp, OptimizerConfig, OptimizerState};
use crate::envs::cartpole::{cartpole_reset, cartpole_step, CartpoleParams};
use crate::error::{Error, Result};
use crate::futures::EvalProbe;
use crate::predictive::PredictiveDistribution;
use crate::process::{Interface, Learner, Observation, ObservationSpace, Output, OutputSpace};
use crate::rng::StreamRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub state_dim: usize,
    pub num_actions: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub start_e: f64,
    pub end_e: f64,
    pub exploration_fraction: f64,
    pub learning_starts: u64,
    pub train_frequency: u64,
    pub target_network_frequency: u64,
    pub tau: f64,
    pub gamma: f64,
    pub optimizer: OptimizerConfig,
    pub total_timesteps: u64,
    /// Softmax temperature of the predictive over actions.
    pub temperature: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            state_dim: 4,
            num_actions: 2,
            hidden_dim: 5,
            batch_size: 128,
            buffer_size: 10_000,
            start_e: 1.0,
            end_e: 0.05,
            exploration_fraction: 0.5,
            learning_starts: 10_000,
            train_frequency: 10,
            target_network_frequency: 500,
            tau: 1.0,
            gamma: 0.99,
            optimizer: OptimizerConfig::adam(2.5e-4),
            total_timesteps: 200_000,
            temperature: 1.0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        let ok = self.state_dim > 0
            && self.num_actions >= 2
            && self.hidden_dim > 0
            && self.batch_size > 0
            && self.buffer_size > 0
            && (0.0..=1.0).contains(&self.start_e)
            && (0.0..=1.0).contains(&self.end_e)
            && self.end_e <= self.start_e
            && (0.0..=1.0).contains(&self.exploration_fraction)
            && self.train_frequency > 0
            && self.target_network_frequency > 0
            && self.tau > 0.0
            && self.tau <= 1.0
            && (0.0..=1.0).contains(&self.gamma)
            && self.temperature > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid DQN settings {self:?}")))
        }
    }

    /// Linear decay from `start_e` to `end_e` over the first
    /// `exploration_fraction` of `total_timesteps`, then constant.
    pub fn epsilon(&self, step: u64) -> f64 {
        let span = self.exploration_fraction * self.total_timesteps as f64;
        if span <= 0.0 {
            return self.end_e;
        }
        let frac = (step as f64 / span).min(1.0);
        self.start_e + frac * (self.end_e - self.start_e)
    }
}

const CHUNK: usize = 256;

/// Fixed-capacity FIFO of transitions stored in shared flat chunks, so
/// cloning a state copies only the chunk written next.
///
/// Record layout: `[s, action, reward, done, s′, has_fixed, fixed_target]`;
/// records without a fixed target are trained with the TD target.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    chunks: Vec<Arc<Vec<f64>>>,
    len: usize,
    head: usize,
}

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<'a> {
    pub state: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub done: bool,
    pub next_state: &'a [f64],
    pub fixed_target: Option<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize) -> Self {
        Self { capacity, state_dim, chunks: Vec::new(), len: 0, head: 0 }
    }

    fn stride(&self) -> usize {
        2 * self.state_dim + 5
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition<'_>) {
        let d = self.state_dim;
        let stride = self.stride();
        let mut rec = Vec::with_capacity(stride);
        rec.extend_from_slice(t.state);
        rec.push(t.action as f64);
        rec.push(t.reward);
        rec.push(if t.done { 1.0 } else { 0.0 });
        rec.extend_from_slice(t.next_state);
        rec.push(if t.fixed_target.is_some() { 1.0 } else { 0.0 });
        rec.push(t.fixed_target.unwrap_or(0.0));
        debug_assert_eq!(rec.len(), 2 * d + 5);
        let (c, o) = (self.head / CHUNK, (self.head % CHUNK) * stride);
        if c == self.chunks.len() {
            self.chunks.push(Arc::new(Vec::with_capacity(CHUNK * stride)));
        }
        let chunk = Arc::make_mut(&mut self.chunks[c]);
        if o == chunk.len() {
            chunk.extend_from_slice(&rec);
        } else {
            chunk[o..o + stride].copy_from_slice(&rec);
        }
        if self.len < self.capacity {
            self.len += 1;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// Transition at storage slot `i`.
    pub fn get(&self, i: usize) -> Transition<'_> {
        let d = self.state_dim;
        let stride = self.stride();
        let o = (i % CHUNK) * stride;
        let r = &self.chunks[i / CHUNK][o..o + stride];
        Transition {
            state: &r[..d],
            action: r[d] as usize,
            reward: r[d + 1],
            done: r[d + 2] != 0.0,
            next_state: &r[d + 3..2 * d + 3],
            fixed_target: (r[2 * d + 3] != 0.0).then_some(r[2 * d + 4]),
        }
    }

    /// Transitions in insertion order, oldest first.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = Transition<'_>> {
        let start = if self.len < self.capacity { 0 } else { self.head };
        (0..self.len).map(move |j| self.get((start + j) % self.len.max(1)))
    }

    fn is_finite(&self) -> bool {
        self.chunks.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnState {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: OptimizerState,
    pub buffer: ReplayBuffer,
    /// Environment steps taken so far.
    pub step: u64,
    /// The last observed environment state and whether it was terminal.
    pub last_obs: Option<(Vec<f64>, bool)>,
    pub last_loss: Option<f64>,
    /// Step of the most recent target synchronisation.
    pub last_sync: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dqn {
    pub config: DqnConfig,
}

fn rl_parts(obs: &Observation) -> Result<(&[f64], Option<f64>, bool)> {
    match obs {
        Observation::RlSignal { state, reward, terminal, .. } => Ok((state, *reward, *terminal)),
        other => Err(Error::Interface(format!("DQN expects an RL signal, got {other:?}"))),
    }
}

/// Probe observations for the given environment states.
pub fn rl_probe(states: &[Vec<f64>]) -> Result<EvalProbe> {
    EvalProbe::new(
        states
            .iter()
            .map(|s| Observation::RlSignal { state: s.clone(), reward: None, terminal: false, episode_step: 0 })
            .collect(),
    )
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// TD regression loss `mean_i (Q(s_i, a_i) − y_i)²` and its parameter
/// gradient for precomputed targets `y`.
pub fn td_loss_and_grad(net: &Mlp, batch: &[(Vec<f64>, usize, f64)]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty TD batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; net.params.len()];
    let mut loss = 0.0;
    let mut dout = vec![0.0; net.output_dim];
    for (s, a, y) in batch {
        let cache = net.forward_cached(s)?;
        let r = cache.output[*a] - y;
        loss += r * r;
        dout.iter_mut().for_each(|v| *v = 0.0);
        dout[*a] = 2.0 * r / n;
        net.backward_into(s, &cache.hidden, &dout, &mut grad);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NumericalDivergence("non-finite TD loss".into()));
    }
    Ok((loss, grad))
}

impl Dqn {
    pub fn new(config: DqnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn q_values(&self, state: &DqnState, s: &[f64]) -> Result<Vec<f64>> {
        state.online.forward(s)
    }

    /// ε-greedy action at the state's current step.
    pub fn act(&self, state: &DqnState, s: &[f64], rng: &mut StreamRng) -> Result<usize> {
        let eps = self.config.epsilon(state.step);
        if rng.random::<f64>() < eps {
            Ok(rng.random_range(0..self.config.num_actions))
        } else {
            Ok(argmax(&self.q_values(state, s)?))
        }
    }

    pub fn greedy_action(&self, state: &DqnState, s: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state, s)?))
    }

    /// Regression targets for the stored transitions at `indices`.
    fn targets(&self, state: &DqnState, indices: &[usize]) -> Result<Vec<(Vec<f64>, usize, f64)>> {
        indices
            .iter()
            .map(|&i| {
                let t = state.buffer.get(i);
                let y = match t.fixed_target {
                    Some(y) => y,
                    None if t.done => t.reward,
                    None => {
                        let q_next = state.target.forward(t.next_state)?;
                        t.reward + self.config.gamma * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    }
                };
                Ok((t.state.to_vec(), t.action, y))
            })
            .collect()
    }

    /// One gradient step on a batch drawn uniformly with replacement.
    pub fn train_step(&self, state: &DqnState, rng: &mut StreamRng) -> Result<DqnState> {
        if state.buffer.is_empty() {
            return Err(Error::Precondition("empty replay buffer".into()));
        }
        let indices: Vec<usize> =
            (0..self.config.batch_size).map(|_| rng.random_range(0..state.buffer.len())).collect();
        let batch = self.targets(state, &indices)?;
        let (loss, grad) = td_loss_and_grad(&state.online, &batch)?;
        let mut next = state.clone();
        self.config.optimizer.apply(&mut next.optimizer, &mut next.online.params, &grad)?;
        next.last_loss = Some(loss);
        Ok(next)
    }

    /// `θ⁻ ← τ θ + (1 − τ) θ⁻`.
    pub fn sync_target(&self, state: &mut DqnState) {
        let tau = self.config.tau;
        for (t, o) in state.target.params.iter_mut().zip(&state.online.params) {
            *t = if tau == 1.0 { *o } else { tau * o + (1.0 - tau) * *t };
        }
        state.last_sync = Some(state.step);
    }

    /// True when a synchronisation happened within the last `window` steps
    /// or is due within the next `window` steps.
    pub fn near_target_sync(&self, state: &DqnState, window: u64) -> bool {
        let freq = self.config.target_network_frequency;
        let recent = state.last_sync.is_some_and(|s| state.step - s <= window);
        let next = (state.step / freq + 1) * freq;
        recent || next - state.step <= window
    }

    /// Mean return of greedy episodes on cartpole using `num_steps`
    /// environment steps in total. Episodes cut off by the budget count only
    /// when no episode completed.
    pub fn evaluate_greedy(&self, state: &DqnState, params: &CartpoleParams, num_steps: usize, rng: &mut StreamRng) -> Result<f64> {
        let mut returns = Vec::new();
        let mut s = cartpole_reset(rng);
        let (mut ret, mut len) = (0.0, 0usize);
        for _ in 0..num_steps {
            let a = self.greedy_action(state, &s)?;
            let (n, r, failed) = cartpole_step(params, &s, a)?;
            ret += r;
            len += 1;
            s = n;
            if failed || len >= params.max_episode_steps {
                returns.push(ret);
                s = cartpole_reset(rng);
                ret = 0.0;
                len = 0;
            }
        }
        if returns.is_empty() {
            returns.push(ret);
        }
        Ok(returns.iter().sum::<f64>() / returns.len() as f64)
    }
}

impl Learner for Dqn {
    type State = DqnState;

    fn interface(&self) -> Interface {
        Interface {
            observation: ObservationSpace::Rl { state_dim: self.config.state_dim },
            output: OutputSpace::Actions(self.config.num_actions),
        }
    }

    fn init_state(&self, rng: &mut StreamRng) -> Result<DqnState> {
        let c = &self.config;
        let online = Mlp::init(c.state_dim, c.hidden_dim, c.num_actions, rng);
        Ok(DqnState {
            target: online.clone(),
            optimizer: c.optimizer.init_state(online.params.len()),
            online,
            buffer: ReplayBuffer::new(c.buffer_size, c.state_dim),
            step: 0,
            last_obs: None,
            last_loss: None,
            last_sync: None,
        })
    }

    fn predict(&self, state: &DqnState, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (s, _, _) = rl_parts(obs)?;
        let q = self.q_values(state, s)?;
        let scaled: Vec<f64> = q.iter().map(|v| v / self.config.temperature).collect();
        Ok(vec![PredictiveDistribution::Categorical(softmax(&scaled))])
    }

    fn sample_output(&self, state: &DqnState, obs: &Observation, rng: &mut StreamRng) -> Result<Output> {
        let (s, _, _) = rl_parts(obs)?;
        Ok(Output::Action(self.act(state, s, rng)?))
    }

    fn learn(&self, state: &DqnState, obs: &Observation, out: &Output, rng: &mut StreamRng) -> Result<DqnState> {
        let (s_new, reward, terminal) = rl_parts(obs)?;
        let c = &self.config;
        let mut next = state.clone();
        next.step += 1;
        if let (Some((prev, false)), Output::Action(a)) = (&state.last_obs, out) {
            let fixed_target = match reward {
                Some(_) => None,
                None => Some(self.q_values(state, prev)?[*a]),
            };
            next.buffer.push(Transition {
                state: prev,
                action: *a,
                reward: reward.unwrap_or(0.0),
                done: terminal,
                next_state: s_new,
                fixed_target,
            });
        }
        next.last_obs = Some((s_new.to_vec(), terminal));
        if next.step > c.learning_starts && next.step % c.train_frequency == 0 && !next.buffer.is_empty() {
            next = self.train_step(&next, rng)?;
        }
        if next.step % c.target_network_frequency == 0 {
            self.sync_target(&mut next);
        }
        Ok(next)
    }

    fn infer(&self, state: &DqnState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<DqnState> {
        let (s_new, _, terminal) = rl_parts(obs)?;
        let mut next = state.clone();
        next.step += 1;
        next.last_obs = Some((s_new.to_vec(), terminal));
        Ok(next)
    }

    fn is_finite(&self, state: &DqnState) -> bool {
        state.online.is_finite() && state.target.is_finite() && state.optimizer.is_finite() && state.buffer.is_finite()
    }

    fn step_loss(&self, state: &DqnState) -> Option<f64> {
        state.last_loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn learner(cfg: DqnConfig) -> Dqn {
        Dqn::new(cfg).unwrap()
    }

    fn state_with_q(dqn: &Dqn, q: [f64; 2]) -> DqnState {
        let mut s = dqn.init_state(&mut SeedTree::new(0).rng("init", 0)).unwrap();
        s.online = Mlp::zeros(4, dqn.config.hidden_dim, 2);
        let n = s.online.params.len();
        s.online.params[n - 2] = q[0];
        s.online.params[n - 1] = q[1];
        s
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig { total_timesteps: 20_000, ..Default::default() };
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(10_000) - 0.05).abs() < 1e-15);
        assert!((c.epsilon(19_999) - 0.05).abs() < 1e-15);
        assert!((c.epsilon(5_000) - 0.525).abs() < 1e-12);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let dqn = learner(DqnConfig::default());
        let s = state_with_q(&dqn, [2.0, 1.0]);
        let mut rng = SeedTree::new(1).rng("act", 0);
        let n = 10_000;
        let ones = (0..n).filter(|_| dqn.act(&s, &[0.0; 4], &mut rng).unwrap() == 1).count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((ones - n as f64 / 2.0).abs() < 3.0 * sd, "{ones}");
    }

    #[test]
    fn greedy_policy_takes_argmax() {
        let dqn = learner(DqnConfig { start_e: 0.0, end_e: 0.0, ..Default::default() });
        let s = state_with_q(&dqn, [2.0, 1.0]);
        let mut rng = SeedTree::new(1).rng("act", 0);
        assert!((0..1000).all(|_| dqn.act(&s, &[0.3, -0.1, 0.02, 0.0], &mut rng).unwrap() == 0));
        match &dqn.predict(&s, &rl_probe(&[vec![0.0; 4]]).unwrap().points()[0]).unwrap()[0] {
            PredictiveDistribution::Categorical(p) => assert!((p[0] - softmax(&[2.0, 1.0])[0]).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn replay_buffer_is_fifo_and_bounded() {
        let mut b = ReplayBuffer::new(3, 1);
        for i in 0..5 {
            let s = [i as f64];
            b.push(Transition { state: &s, action: 1, reward: 1.0, done: i == 4, next_state: &s, fixed_target: None });
        }
        assert_eq!(b.len(), 3);
        let order: Vec<f64> = b.iter_oldest_first().map(|t| t.state[0]).collect();
        assert_eq!(order, vec![2.0, 3.0, 4.0]);
        assert!(b.iter_oldest_first().last().unwrap().done);
    }

    #[test]
    fn replay_buffer_wraps_across_chunks_and_clones_independently() {
        let push = |b: &mut ReplayBuffer, i: usize| {
            let s = [i as f64];
            b.push(Transition { state: &s, action: 0, reward: 0.0, done: false, next_state: &s, fixed_target: Some(i as f64) });
        };
        let mut b = ReplayBuffer::new(700, 1);
        (0..1000).for_each(|i| push(&mut b, i));
        let order: Vec<f64> = b.iter_oldest_first().map(|t| t.state[0]).collect();
        assert_eq!(order, (300..1000).map(|i| i as f64).collect::<Vec<_>>());
        let snapshot = b.clone();
        push(&mut b, 1000);
        assert_eq!(snapshot.iter_oldest_first().next().unwrap().state[0], 300.0);
        assert_eq!(b.iter_oldest_first().next().unwrap().state[0], 301.0);
        assert_eq!(b.iter_oldest_first().last().unwrap().fixed_target, Some(1000.0));
    }

    #[test]
    fn td_gradient_matches_finite_differences() {
        let mut rng = SeedTree::new(5).rng("td", 0);
        let net = Mlp::init(4, 5, 2, &mut rng);
        let batch: Vec<(Vec<f64>, usize, f64)> = (0..8)
            .map(|_| {
                let s: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                (s, rng.random_range(0..2), rng.random_range(-2.0..2.0))
            })
            .collect();
        let (_, g) = td_loss_and_grad(&net, &batch).unwrap();
        let h = 1e-5;
        for _ in 0..20 {
            let i = rng.random_range(0..net.params.len());
            let mut p = net.clone();
            p.params[i] += h;
            let lp = td_loss_and_grad(&p, &batch).unwrap().0;
            p.params[i] -= 2.0 * h;
            let lm = td_loss_and_grad(&p, &batch).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    fn signal(state: Vec<f64>, reward: Option<f64>) -> Observation {
        Observation::RlSignal { state, reward, terminal: false, episode_step: 1 }
    }

    #[test]
    fn target_equals_online_after_sync() {
        let cfg = DqnConfig { learning_starts: 0, train_frequency: 1, target_network_frequency: 4, batch_size: 2, ..Default::default() };
        let dqn = learner(cfg);
        let seeds = SeedTree::new(2);
        let mut s = dqn.init_state(&mut seeds.rng("init", 0)).unwrap();
        for t in 0..4u64 {
            let obs = signal(vec![0.01 * t as f64; 4], Some(1.0));
            s = dqn.learn(&s, &obs, &Output::Action((t % 2) as usize), &mut seeds.rng("u", t)).unwrap();
            if (1..3).contains(&t) {
                assert_ne!(s.target.params, s.online.params);
            }
        }
        assert_eq!(s.target.params, s.online.params);
        assert!(dqn.near_target_sync(&s, 0));
    }

    #[test]
    fn no_training_before_learning_starts() {
        let dqn = learner(DqnConfig { learning_starts: 100, train_frequency: 1, ..Default::default() });
        let seeds = SeedTree::new(2);
        let s0 = dqn.init_state(&mut seeds.rng("init", 0)).unwrap();
        let mut s = s0.clone();
        for t in 0..50u64 {
            s = dqn.learn(&s, &signal(vec![0.0; 4], Some(1.0)), &Output::Action(0), &mut seeds.rng("u", t)).unwrap();
        }
        assert_eq!(s.online, s0.online);
        assert_eq!(s.buffer.len(), 49);
        assert_eq!(s.last_loss, None);
    }

    #[test]
    fn withheld_reward_stores_current_estimate() {
        let dqn = learner(DqnConfig::default());
        let s = state_with_q(&dqn, [2.0, 1.0]);
        let mut rng = SeedTree::new(0).rng("u", 0);
        let s = dqn.learn(&s, &signal(vec![0.1; 4], Some(1.0)), &Output::Action(0), &mut rng).unwrap();
        let s = dqn.learn(&s, &signal(vec![0.2; 4], None), &Output::Action(1), &mut rng).unwrap();
        let t = s.buffer.get(0);
        assert_eq!(t.fixed_target, Some(1.0));
        assert_eq!(t.action, 1);
        let s2 = dqn.infer(&s, &signal(vec![0.3; 4], None), &Output::Action(1), &mut rng).unwrap();
        assert_eq!(s2.online, s.online);
        assert_eq!(s2.buffer, s.buffer);
    }
}

//! Small streams used by the thought experiments: coin flips, keyed bit
//! queries, ticking clocks and fixed regression sequences.

use rand::Rng;

use crate::error::{Error, Result};
use crate::process::{Environment, History, Interface, Observation, ObservationSpace, Output, OutputSpace, Target};
use crate::rng::{SeedTree, StreamRng};

fn predicted_targets(output: &Output) -> Result<Vec<Target>> {
    match output {
        Output::PredictedTargets(ts) => Ok(ts.clone()),
        other => Err(Error::Interface(format!("hybrid needs predicted targets, got {other:?}"))),
    }
}

fn last_inputs(history: &History) -> Result<&[Vec<f64>]> {
    match history.last_observation()? {
        Observation::SupervisedPair { inputs, .. } => Ok(inputs),
        other => Err(Error::Interface(format!("expected a supervised history, got {other:?}"))),
    }
}

/// Repeated flips of a coin with heads probability `p_heads` (class 1).
/// The first flips can be scripted. The input is a constant placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinEnv {
    pub p_heads: f64,
    pub scripted: Vec<usize>,
}

impl CoinEnv {
    pub fn new(p_heads: f64, scripted: Vec<usize>) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_heads) || scripted.iter().any(|&c| c > 1) {
            return Err(Error::Precondition("invalid coin settings".into()));
        }
        Ok(Self { p_heads, scripted })
    }

    fn placeholder() -> Vec<Vec<f64>> {
        vec![vec![0.0]]
    }
}

impl Environment for CoinEnv {
    fn interface(&self) -> Interface {
        Interface { observation: ObservationSpace::Supervised { input_dim: 1 }, output: OutputSpace::Classes(2) }
    }

    fn initial(&self, _rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::SupervisedPair { inputs: Self::placeholder(), prev_targets: None })
    }

    fn next(&self, history: &History, _output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        let flip_index = history.time();
        let flip = match self.scripted.get(flip_index) {
            Some(&c) => c,
            None => usize::from(rng.random::<f64>() < self.p_heads),
        };
        Ok(Observation::SupervisedPair { inputs: Self::placeholder(), prev_targets: Some(vec![Target::Class(flip)]) })
    }

    fn hybrid_next(&self, _anchor: usize, _history: &History, output: &Output, _rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::SupervisedPair { inputs: Self::placeholder(), prev_targets: Some(predicted_targets(output)?) })
    }
}

/// Queries of integer keys in `0..num_keys`. The target of a key is either a
/// fixed table entry or a fresh Bernoulli(`p_one`) bit.
#[derive(Debug, Clone, PartialEq)]
pub struct BitQueryEnv {
    pub num_keys: usize,
    /// Size of the learner's output space (a null class may be included).
    pub classes: usize,
    pub values: Option<Vec<usize>>,
    pub p_one: f64,
}

impl BitQueryEnv {
    pub fn new(num_keys: usize, classes: usize, values: Option<Vec<usize>>, p_one: f64) -> Result<Self> {
        if num_keys == 0 || classes < 2 {
            return Err(Error::Precondition("need at least one key and two classes".into()));
        }
        if let Some(v) = &values {
            if v.len() != num_keys || v.iter().any(|&c| c >= classes) {
                return Err(Error::Precondition("value table does not match keys and classes".into()));
            }
        }
        Ok(Self { num_keys, classes, values, p_one })
    }

    fn key(&self, rng: &mut StreamRng) -> Vec<Vec<f64>> {
        vec![vec![rng.random_range(0..self.num_keys) as f64]]
    }
}

impl Environment for BitQueryEnv {
    fn interface(&self) -> Interface {
        Interface { observation: ObservationSpace::Supervised { input_dim: 1 }, output: OutputSpace::Classes(self.classes) }
    }

    fn initial(&self, rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::SupervisedPair { inputs: self.key(rng), prev_targets: None })
    }

    fn next(&self, history: &History, _output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        let prev = last_inputs(history)?;
        let targets = prev
            .iter()
            .map(|x| match &self.values {
                Some(v) => Target::Class(v[x[0] as usize]),
                None => Target::Class(usize::from(rng.random::<f64>() < self.p_one)),
            })
            .collect();
        Ok(Observation::SupervisedPair { inputs: self.key(rng), prev_targets: Some(targets) })
    }

    fn hybrid_next(&self, _anchor: usize, _history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::SupervisedPair { inputs: self.key(rng), prev_targets: Some(predicted_targets(output)?) })
    }
}

/// Inputs `[t, features…]` carrying the current tick. With an empty dataset
/// the target of a tick is the tick itself (a clock); otherwise each step
/// shows a dataset point chosen by `(seed, t)` and its label is the target.
/// Hybrid draws keep the tick at the anchor time.
#[derive(Debug, Clone, PartialEq)]
pub struct TickEnv {
    pub data: Vec<(Vec<f64>, usize)>,
    pub classes: usize,
    pub seed: u64,
}

impl TickEnv {
    pub fn clock() -> Self {
        Self { data: Vec::new(), classes: 0, seed: 0 }
    }

    pub fn labelled(data: Vec<(Vec<f64>, usize)>, classes: usize, seed: u64) -> Result<Self> {
        if data.is_empty() || classes < 2 || data.iter().any(|(_, c)| *c >= classes) {
            return Err(Error::Precondition("ticked dataset needs labelled points".into()));
        }
        Ok(Self { data, classes, seed })
    }

    fn feature_dim(&self) -> usize {
        self.data.first().map_or(0, |(x, _)| x.len())
    }

    fn index_at(&self, t: usize) -> usize {
        SeedTree::new(self.seed).rng("tick-index", t as u64).random_range(0..self.data.len())
    }

    fn input(&self, tick: usize, point: Option<&[f64]>) -> Vec<Vec<f64>> {
        let mut x = vec![tick as f64];
        if let Some(p) = point {
            x.extend_from_slice(p);
        }
        vec![x]
    }

    fn input_at(&self, t: usize) -> Vec<Vec<f64>> {
        if self.data.is_empty() {
            self.input(t, None)
        } else {
            self.input(t, Some(&self.data[self.index_at(t)].0))
        }
    }

    fn target_at(&self, t: usize) -> Target {
        if self.data.is_empty() {
            Target::Real(t as f64)
        } else {
            Target::Class(self.data[self.index_at(t)].1)
        }
    }
}

impl Environment for TickEnv {
    fn interface(&self) -> Interface {
        Interface {
            observation: ObservationSpace::Supervised { input_dim: 1 + self.feature_dim() },
            output: if self.data.is_empty() { OutputSpace::Real } else { OutputSpace::Classes(self.classes) },
        }
    }

    fn initial(&self, _rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::SupervisedPair { inputs: self.input_at(0), prev_targets: None })
    }

    fn next(&self, history: &History, _output: &Output, _rng: &mut StreamRng) -> Result<Observation> {
        let t = history.time() + 1;
        Ok(Observation::SupervisedPair { inputs: self.input_at(t), prev_targets: Some(vec![self.target_at(t - 1)]) })
    }

    fn hybrid_next(&self, anchor: usize, _history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        let inputs = if self.data.is_empty() {
            self.input(anchor, None)
        } else {
            self.input(anchor, Some(&self.data[rng.random_range(0..self.data.len())].0))
        };
        Ok(Observation::SupervisedPair { inputs, prev_targets: Some(predicted_targets(output)?) })
    }
}

/// A fixed list of regression pairs presented in order and then cyclically.
/// Hybrid inputs are drawn uniformly from the list.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEnv {
    pub points: Vec<(Vec<f64>, f64)>,
}

impl SequenceEnv {
    pub fn new(points: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        match points.first() {
            Some((x0, _)) if points.iter().all(|(x, _)| x.len() == x0.len()) => Ok(Self { points }),
            _ => Err(Error::Precondition("sequence needs points of equal dimension".into())),
        }
    }

    fn at(&self, t: usize) -> &(Vec<f64>, f64) {
        &self.points[t % self.points.len()]
    }
}

impl Environment for SequenceEnv {
    fn interface(&self) -> Interface {
        Interface {
            observation: ObservationSpace::Supervised { input_dim: self.points[0].0.len() },
            output: OutputSpace::Real,
        }
    }

    fn initial(&self, _rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::SupervisedPair { inputs: vec![self.at(0).0.clone()], prev_targets: None })
    }

    fn next(&self, history: &History, _output: &Output, _rng: &mut StreamRng) -> Result<Observation> {
        let t = history.time() + 1;
        Ok(Observation::SupervisedPair {
            inputs: vec![self.at(t).0.clone()],
            prev_targets: Some(vec![Target::Real(self.at(t - 1).1)]),
        })
    }

    fn hybrid_next(&self, _anchor: usize, _history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        let x = self.points[rng.random_range(0..self.points.len())].0.clone();
        Ok(Observation::SupervisedPair { inputs: vec![x], prev_targets: Some(predicted_targets(output)?) })
    }
}

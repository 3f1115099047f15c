//! Small learners that act out edge cases of forgetting: a frozen learner,
//! bounded and unbounded memories, clocks, moody and random learners, tick
//! dependent classifiers, a parity checker and a Beta-Bernoulli coin model.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use super::mlp::{softmax, Mlp};
use super::{resolve_pending, supervised_parts};
use crate::error::{Error, Result};
use crate::predictive::PredictiveDistribution;
use crate::process::{Interface, Learner, Observation, ObservationSpace, Output, OutputSpace, Target};
use crate::rng::{SeedTree, StreamRng};

fn one_hot(classes: usize, c: usize) -> PredictiveDistribution {
    let mut p = vec![0.0; classes];
    p[c] = 1.0;
    PredictiveDistribution::Categorical(p)
}

fn key_of(x: &[f64]) -> Result<usize> {
    match x.first() {
        Some(&v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
        _ => Err(Error::Domain(format!("key {x:?} is not a non-negative integer"))),
    }
}

fn class_of(t: &Target) -> Result<usize> {
    match t {
        Target::Class(c) => Ok(*c),
        Target::Real(_) => Err(Error::Interface("expected a class target".into())),
    }
}

fn keyed_interface(classes: usize) -> Interface {
    Interface { observation: ObservationSpace::Supervised { input_dim: 1 }, output: OutputSpace::Classes(classes) }
}

/// A learner whose state never changes; every input gets the same predictive.
#[derive(Debug, Clone, PartialEq)]
pub struct Degenerate {
    pub interface: Interface,
    pub predictive: PredictiveDistribution,
}

impl Degenerate {
    pub fn new(interface: Interface, predictive: PredictiveDistribution) -> Result<Self> {
        predictive.validate()?;
        Ok(Self { interface, predictive })
    }
}

impl Learner for Degenerate {
    type State = ();

    fn interface(&self) -> Interface {
        self.interface
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<()> {
        Ok(())
    }

    fn predict(&self, _state: &(), obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let n = match obs {
            Observation::SupervisedPair { inputs, .. } => inputs.len(),
            _ => 1,
        };
        Ok(vec![self.predictive.clone(); n])
    }

    fn learn(&self, _state: &(), _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<()> {
        Ok(())
    }

    fn infer(&self, _state: &(), _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<()> {
        Ok(())
    }
}

/// Class index used for "nothing stored".
pub const NULL_CLASS: usize = 2;

/// A first-in first-out store of at most `capacity` bits.
///
/// Each arriving bit target is pushed; when full the oldest bit is dropped.
/// A query for address `a` (counted from the oldest entry) predicts the
/// stored bit, or the null class when the address is empty. Null targets are
/// ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FifoStack {
    pub capacity: usize,
}

impl Learner for FifoStack {
    type State = VecDeque<usize>;

    fn interface(&self) -> Interface {
        keyed_interface(3)
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<VecDeque<usize>> {
        Ok(VecDeque::with_capacity(self.capacity))
    }

    fn predict(&self, state: &VecDeque<usize>, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        inputs.iter().map(|x| Ok(one_hot(3, state.get(key_of(x)?).copied().unwrap_or(NULL_CLASS)))).collect()
    }

    fn learn(&self, state: &VecDeque<usize>, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<VecDeque<usize>> {
        let (_, targets) = supervised_parts(obs)?;
        let mut next = state.clone();
        for t in targets.unwrap_or_default() {
            let bit = class_of(t)?;
            if bit == NULL_CLASS || self.capacity == 0 {
                continue;
            }
            if next.len() == self.capacity {
                next.pop_front();
            }
            next.push_back(bit);
        }
        Ok(next)
    }

    fn infer(&self, state: &VecDeque<usize>, _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<VecDeque<usize>> {
        Ok(state.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HashMapState {
    pub table: BTreeMap<usize, usize>,
    pub pending: Vec<Vec<f64>>,
}

/// An unbounded associative memory that never overwrites an entry. Unknown
/// keys predict the null class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashMapLearner {
    pub classes: usize,
    pub null_class: usize,
}

impl Learner for HashMapLearner {
    type State = HashMapState;

    fn interface(&self) -> Interface {
        keyed_interface(self.classes)
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<HashMapState> {
        Ok(HashMapState::default())
    }

    fn predict(&self, state: &HashMapState, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        inputs
            .iter()
            .map(|x| Ok(one_hot(self.classes, state.table.get(&key_of(x)?).copied().unwrap_or(self.null_class))))
            .collect()
    }

    fn learn(&self, state: &HashMapState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<HashMapState> {
        let (inputs, targets) = supervised_parts(obs)?;
        let mut next = state.clone();
        if let Some(pairs) = resolve_pending(&state.pending, targets)? {
            for (x, t) in pairs {
                let v = class_of(&t)?;
                if v != self.null_class {
                    next.table.entry(key_of(&x)?).or_insert(v);
                }
            }
        }
        next.pending = inputs.to_vec();
        Ok(next)
    }

    fn infer(&self, state: &HashMapState, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<HashMapState> {
        let (inputs, _) = supervised_parts(obs)?;
        Ok(HashMapState { table: state.table.clone(), pending: inputs.to_vec() })
    }
}

/// Reads the tick carried in the first input coordinate and predicts it
/// exactly. Inference-mode updates leave the clock where it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Clock;

impl Learner for Clock {
    type State = f64;

    fn interface(&self) -> Interface {
        Interface { observation: ObservationSpace::Supervised { input_dim: 1 }, output: OutputSpace::Real }
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<f64> {
        Ok(0.0)
    }

    fn predict(&self, state: &f64, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        Ok(vec![PredictiveDistribution::Dirac(*state); inputs.len()])
    }

    fn learn(&self, state: &f64, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<f64> {
        let (inputs, _) = supervised_parts(obs)?;
        Ok(inputs.last().and_then(|x| x.first()).copied().unwrap_or(*state))
    }

    fn infer(&self, state: &f64, _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<f64> {
        Ok(*state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoodyState<S> {
    pub inner: S,
    pub count: u64,
}

/// Applies the inner learner's learning update on even steps and its
/// inference update on odd ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Moody<L> {
    pub inner: L,
}

impl<L: Learner> Learner for Moody<L> {
    type State = MoodyState<L::State>;

    fn interface(&self) -> Interface {
        self.inner.interface()
    }

    fn init_state(&self, rng: &mut StreamRng) -> Result<Self::State> {
        Ok(MoodyState { inner: self.inner.init_state(rng)?, count: 0 })
    }

    fn predict(&self, state: &Self::State, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        self.inner.predict(&state.inner, obs)
    }

    fn learn(&self, state: &Self::State, obs: &Observation, out: &Output, rng: &mut StreamRng) -> Result<Self::State> {
        let count = state.count + 1;
        let inner = if count % 2 == 0 {
            self.inner.learn(&state.inner, obs, out, rng)?
        } else {
            self.inner.infer(&state.inner, obs, out, rng)?
        };
        Ok(MoodyState { inner, count })
    }

    fn infer(&self, state: &Self::State, obs: &Observation, out: &Output, rng: &mut StreamRng) -> Result<Self::State> {
        Ok(MoodyState { inner: self.inner.infer(&state.inner, obs, out, rng)?, count: state.count + 1 })
    }

    fn is_finite(&self, state: &Self::State) -> bool {
        self.inner.is_finite(&state.inner)
    }

    fn step_loss(&self, state: &Self::State) -> Option<f64> {
        self.inner.step_loss(&state.inner)
    }

    fn prepare_estimate(&self, state: &Self::State) -> Result<Self::State> {
        Ok(MoodyState { inner: self.inner.prepare_estimate(&state.inner)?, count: state.count })
    }
}

/// `L` fixed logistic functions; every learning update selects one uniformly
/// at random. Since the selection ignores data and time, the predictive is
/// the uniform mixture of the functions.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionPicker {
    /// Rows `[bias, w_1, …, w_d]`.
    pub functions: Vec<Vec<f64>>,
}

impl FunctionPicker {
    pub fn random(num_functions: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if num_functions == 0 || input_dim == 0 {
            return Err(Error::Precondition("need at least one function and one input".into()));
        }
        let mut rng = SeedTree::new(seed).rng("function-picker", 0);
        let functions = (0..num_functions)
            .map(|_| (0..=input_dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        Ok(Self { functions })
    }

    fn input_dim(&self) -> usize {
        self.functions[0].len() - 1
    }

    /// Probability of class 1 under function `l`.
    pub fn function_probability(&self, l: usize, x: &[f64]) -> f64 {
        let w = &self.functions[l];
        let z = w[0] + w[1..].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }
}

impl Learner for FunctionPicker {
    type State = usize;

    fn interface(&self) -> Interface {
        Interface {
            observation: ObservationSpace::Supervised { input_dim: self.input_dim() },
            output: OutputSpace::Classes(2),
        }
    }

    fn init_state(&self, rng: &mut StreamRng) -> Result<usize> {
        Ok(rng.random_range(0..self.functions.len()))
    }

    fn predict(&self, _state: &usize, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        let l = self.functions.len() as f64;
        Ok(inputs
            .iter()
            .map(|x| {
                let p = (0..self.functions.len()).map(|i| self.function_probability(i, x)).sum::<f64>() / l;
                PredictiveDistribution::Categorical(vec![1.0 - p, p])
            })
            .collect())
    }

    fn learn(&self, _state: &usize, _obs: &Observation, _out: &Output, rng: &mut StreamRng) -> Result<usize> {
        Ok(rng.random_range(0..self.functions.len()))
    }

    fn infer(&self, state: &usize, _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<usize> {
        Ok(*state)
    }
}

/// How a ticked classifier transforms its class probabilities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TickTransform {
    /// Reverse the class order on odd ticks.
    FlipOnOdd,
    /// Apply `permutation` (class `i` reported as `permutation[i]`) from tick
    /// `from` onwards.
    PermuteFrom { from: usize, permutation: Vec<usize> },
}

/// A frozen classifier over inputs `[tick, features…]` whose reported
/// probabilities depend on the last tick it has read. Learning updates read
/// the tick; inference updates keep the last known tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickedClassifier {
    pub net: Mlp,
    pub transform: TickTransform,
}

impl TickedClassifier {
    pub fn new(net: Mlp, transform: TickTransform) -> Result<Self> {
        if let TickTransform::PermuteFrom { permutation, .. } = &transform {
            let mut sorted = permutation.clone();
            sorted.sort_unstable();
            if sorted != (0..net.output_dim).collect::<Vec<_>>() {
                return Err(Error::Precondition("permutation must rearrange the classes".into()));
            }
        }
        Ok(Self { net, transform })
    }

    fn transformed(&self, tick: usize, probs: Vec<f64>) -> Vec<f64> {
        match &self.transform {
            TickTransform::FlipOnOdd if tick % 2 == 1 => probs.into_iter().rev().collect(),
            TickTransform::PermuteFrom { from, permutation } if tick >= *from => {
                let mut out = vec![0.0; probs.len()];
                for (i, p) in probs.into_iter().enumerate() {
                    out[permutation[i]] = p;
                }
                out
            }
            _ => probs,
        }
    }
}

impl Learner for TickedClassifier {
    type State = usize;

    fn interface(&self) -> Interface {
        Interface {
            observation: ObservationSpace::Supervised { input_dim: 1 + self.net.input_dim },
            output: OutputSpace::Classes(self.net.output_dim),
        }
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<usize> {
        Ok(0)
    }

    fn predict(&self, state: &usize, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        inputs
            .iter()
            .map(|x| {
                let logits = self.net.forward(&x[1..])?;
                Ok(PredictiveDistribution::Categorical(self.transformed(*state, softmax(&logits))))
            })
            .collect()
    }

    fn learn(&self, state: &usize, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<usize> {
        let (inputs, _) = supervised_parts(obs)?;
        match inputs.last() {
            Some(x) => key_of(x),
            None => Ok(*state),
        }
    }

    fn infer(&self, state: &usize, _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<usize> {
        Ok(*state)
    }
}

/// Tracks the parity of the number of one-bits seen in its inputs and
/// predicts class 1 when that number is even. Both updates read the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParityChecker;

impl ParityChecker {
    fn advance(state: bool, obs: &Observation) -> Result<bool> {
        let (inputs, _) = supervised_parts(obs)?;
        let ones = inputs.iter().filter(|x| x.first().is_some_and(|&v| v >= 0.5)).count();
        Ok(state ^ (ones % 2 == 1))
    }
}

impl Learner for ParityChecker {
    /// `true` when an odd number of ones has been seen.
    type State = bool;

    fn interface(&self) -> Interface {
        keyed_interface(2)
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<bool> {
        Ok(false)
    }

    fn predict(&self, state: &bool, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        Ok(vec![one_hot(2, usize::from(!*state)); inputs.len()])
    }

    fn learn(&self, state: &bool, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<bool> {
        Self::advance(*state, obs)
    }

    fn infer(&self, state: &bool, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<bool> {
        Self::advance(*state, obs)
    }

    fn predictions_follow_auxiliary_state(&self) -> bool {
        true
    }
}

/// Heads and flip counts of the Beta-Bernoulli coin model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoinCounts {
    pub heads: u64,
    pub total: u64,
}

/// Exact Beta(`alpha`, `beta`)-Bernoulli inference on coin flips (class 1 =
/// heads).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinFlipBayes {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for CoinFlipBayes {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl CoinFlipBayes {
    pub fn heads_probability(&self, c: &CoinCounts) -> f64 {
        (self.alpha + c.heads as f64) / (self.alpha + self.beta + c.total as f64)
    }
}

impl Learner for CoinFlipBayes {
    type State = CoinCounts;

    fn interface(&self) -> Interface {
        keyed_interface(2)
    }

    fn init_state(&self, _rng: &mut StreamRng) -> Result<CoinCounts> {
        Ok(CoinCounts::default())
    }

    fn predict(&self, state: &CoinCounts, obs: &Observation) -> Result<Vec<PredictiveDistribution>> {
        let (inputs, _) = supervised_parts(obs)?;
        let p = self.heads_probability(state);
        Ok(vec![PredictiveDistribution::Categorical(vec![1.0 - p, p]); inputs.len()])
    }

    fn learn(&self, state: &CoinCounts, obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<CoinCounts> {
        let (_, targets) = supervised_parts(obs)?;
        let mut next = *state;
        for t in targets.unwrap_or_default() {
            let c = class_of(t)?;
            if c > 1 {
                return Err(Error::Domain(format!("coin outcome {c}")));
            }
            next.heads += c as u64;
            next.total += 1;
        }
        Ok(next)
    }

    fn infer(&self, state: &CoinCounts, _obs: &Observation, _out: &Output, _rng: &mut StreamRng) -> Result<CoinCounts> {
        Ok(*state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::futures::{rollout_with, RolloutMode};
    use crate::process::History;

    fn obs(inputs: &[f64], targets: Option<Vec<Target>>) -> Observation {
        Observation::SupervisedPair { inputs: inputs.iter().map(|&x| vec![x]).collect(), prev_targets: targets }
    }

    fn rng() -> StreamRng {
        SeedTree::new(3).rng("test", 0)
    }

    #[test]
    fn parity_after_one_one_zero_predicts_even() {
        let p = ParityChecker;
        let mut s = p.init_state(&mut rng()).unwrap();
        for bit in [1.0, 1.0, 0.0] {
            s = p.learn(&s, &obs(&[bit], None), &Output::Null, &mut rng()).unwrap();
        }
        assert_eq!(p.predict(&s, &obs(&[0.0], None)).unwrap()[0], one_hot(2, 1));
        let s = p.learn(&s, &obs(&[1.0], None), &Output::Null, &mut rng()).unwrap();
        assert_eq!(p.predict(&s, &obs(&[0.0], None)).unwrap()[0], one_hot(2, 0));
    }

    #[test]
    fn zero_capacity_stack_never_changes() {
        let s = FifoStack { capacity: 0 };
        let z0 = s.init_state(&mut rng()).unwrap();
        let z = s.learn(&z0, &obs(&[0.0], Some(vec![Target::Class(1)])), &Output::Null, &mut rng()).unwrap();
        assert_eq!(z, z0);
        assert_eq!(s.predict(&z, &obs(&[0.0], None)).unwrap()[0], one_hot(3, NULL_CLASS));
    }

    #[test]
    fn full_stack_drops_oldest_bit() {
        let s = FifoStack { capacity: 2 };
        let mut z = s.init_state(&mut rng()).unwrap();
        for b in [1, 0, 0] {
            z = s.learn(&z, &obs(&[0.0], Some(vec![Target::Class(b)])), &Output::Null, &mut rng()).unwrap();
        }
        assert_eq!(z, VecDeque::from(vec![0, 0]));
        let z = s.learn(&z, &obs(&[0.0], Some(vec![Target::Class(NULL_CLASS)])), &Output::Null, &mut rng()).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(s.predict(&z, &obs(&[5.0], None)).unwrap()[0], one_hot(3, NULL_CLASS));
    }

    #[test]
    fn hash_map_never_overwrites() {
        let h = HashMapLearner { classes: 3, null_class: 2 };
        let mut z = h.init_state(&mut rng()).unwrap();
        z = h.learn(&z, &obs(&[4.0], None), &Output::Null, &mut rng()).unwrap();
        z = h.learn(&z, &obs(&[4.0], Some(vec![Target::Class(1)])), &Output::Null, &mut rng()).unwrap();
        z = h.learn(&z, &obs(&[7.0], Some(vec![Target::Class(0)])), &Output::Null, &mut rng()).unwrap();
        assert_eq!(z.table.get(&4), Some(&1));
        assert_eq!(h.predict(&z, &obs(&[7.0], None)).unwrap()[0], one_hot(3, 2));
    }

    #[test]
    fn clock_inference_rollout_stays_at_seven() {
        let env = crate::envs::TickEnv::clock();
        let clock = Clock;
        let mut history = History::start(obs(&[0.0], None));
        let mut z = 0.0;
        for t in 1..=7 {
            let o = obs(&[t as f64], Some(vec![Target::Real((t - 1) as f64)]));
            z = clock.learn(&z, &o, &Output::Null, &mut rng()).unwrap();
            history.push(o, Output::PredictedTargets(vec![Target::Real(z)]));
        }
        assert_eq!(z, 7.0);
        for mode in [RolloutMode::Inference, RolloutMode::Learning] {
            rollout_with(&clock, &env, &z, &history, 25, mode, &mut rng(), |_, s| {
                assert_eq!(clock.predict(s, &obs(&[0.0], None))?[0], PredictiveDistribution::Dirac(7.0));
                Ok(())
            })
            .unwrap();
        }
    }

    #[test]
    fn moody_learns_on_even_counts_only() {
        let m = Moody { inner: CoinFlipBayes::default() };
        let mut z = m.init_state(&mut rng()).unwrap();
        for _ in 0..4 {
            z = m.learn(&z, &obs(&[0.0], Some(vec![Target::Class(1)])), &Output::Null, &mut rng()).unwrap();
        }
        assert_eq!(z.inner, CoinCounts { heads: 2, total: 2 });
    }

    #[test]
    fn coin_posterior_predictive() {
        let c = CoinFlipBayes::default();
        let mut z = c.init_state(&mut rng()).unwrap();
        assert_eq!(c.heads_probability(&z), 0.5);
        for _ in 0..10 {
            z = c.learn(&z, &obs(&[0.0], Some(vec![Target::Class(1)])), &Output::Null, &mut rng()).unwrap();
        }
        assert!((c.heads_probability(&z) - 11.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn function_picker_predictive_ignores_selection() {
        let f = FunctionPicker::random(4, 2, 9).unwrap();
        let o = Observation::SupervisedPair { inputs: vec![vec![0.3, -0.2]], prev_targets: None };
        let a = f.predict(&0, &o).unwrap();
        let z = f.learn(&0, &o, &Output::Null, &mut rng()).unwrap();
        assert_eq!(f.predict(&z, &o).unwrap(), a);
        let mean = (0..4).map(|l| f.function_probability(l, &[0.3, -0.2])).sum::<f64>() / 4.0;
        assert!(matches!(&a[0], PredictiveDistribution::Categorical(p) if (p[1] - mean).abs() < 1e-15));
    }

    #[test]
    fn ticked_classifier_flips_and_permutes() {
        let mut net = Mlp::zeros(2, 1, 2);
        let n = net.params.len();
        net.params[n - 1] = 1.0;
        let flip = TickedClassifier::new(net.clone(), TickTransform::FlipOnOdd).unwrap();
        let o = Observation::SupervisedPair { inputs: vec![vec![3.0, 0.0, 0.0]], prev_targets: None };
        let even = flip.predict(&2, &o).unwrap();
        let odd = flip.predict(&3, &o).unwrap();
        match (&even[0], &odd[0]) {
            (PredictiveDistribution::Categorical(a), PredictiveDistribution::Categorical(b)) => {
                assert!(a[1] > 0.5 && b[0] == a[1] && b[1] == a[0]);
            }
            _ => panic!("categorical expected"),
        }
        assert_eq!(flip.learn(&0, &o, &Output::Null, &mut rng()).unwrap(), 3);
        assert_eq!(flip.infer(&0, &o, &Output::Null, &mut rng()).unwrap(), 0);
        let perm = TickedClassifier::new(net, TickTransform::PermuteFrom { from: 5, permutation: vec![1, 0] }).unwrap();
        assert_eq!(perm.predict(&4, &o).unwrap(), even);
        assert_eq!(perm.predict(&5, &o).unwrap(), flip.predict(&1, &o).unwrap());
        assert!(TickedClassifier::new(Mlp::zeros(2, 1, 2), TickTransform::PermuteFrom { from: 0, permutation: vec![0, 0] }).is_err());
    }

    #[test]
    fn degenerate_state_is_constant() {
        let d = Degenerate::new(keyed_interface(2), PredictiveDistribution::Categorical(vec![0.3, 0.7])).unwrap();
        d.learn(&(), &obs(&[1.0], Some(vec![Target::Class(0)])), &Output::Null, &mut rng()).unwrap();
        assert_eq!(d.predict(&(), &obs(&[1.0, 2.0], None)).unwrap().len(), 2);
    }
}

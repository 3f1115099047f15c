//! Supervised streams over fixed datasets: sinusoid regression, two-moons
//! classification and the class-incremental two-moons variant.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{Environment, History, Interface, Observation, ObservationSpace, Output, OutputSpace, Target};
use crate::rng::{SeedTree, StreamRng};

/// Labelled points.
pub type LabelledSet = Vec<(Vec<f64>, Target)>;

/// Shuffle `0..n` and cut it into batches of `batch_size` (the last may be short).
pub fn supervised_epoch_stream(n: usize, batch_size: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// A batch presented at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledBatch {
    pub task: usize,
    pub epoch: usize,
    pub indices: Vec<usize>,
}

/// Minibatch stream over one or more tasks.
///
/// Epoch `e` serves task `⌊e · num_tasks / num_epochs⌋`. The inputs shown at
/// step `t` are batch `t` of the schedule and the targets are those of batch
/// `t − 1`. In hybrid draws the inputs are resampled with replacement from
/// the task active at the anchor time.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedEnv {
    pub input_dim: usize,
    pub output: OutputSpace,
    pub tasks: Vec<LabelledSet>,
    pub validation: LabelledSet,
    pub batch_size: usize,
    pub num_epochs: usize,
    schedule: Vec<ScheduledBatch>,
    total_steps: usize,
}

impl SupervisedEnv {
    pub fn new(
        input_dim: usize,
        output: OutputSpace,
        tasks: Vec<LabelledSet>,
        validation: LabelledSet,
        batch_size: usize,
        num_epochs: usize,
        shuffle_seed: u64,
    ) -> Result<Self> {
        if tasks.is_empty() || tasks.iter().any(|t| t.is_empty()) {
            return Err(Error::Precondition("every task needs training data".into()));
        }
        if batch_size == 0 || num_epochs == 0 {
            return Err(Error::Precondition("batch size and epochs must be positive".into()));
        }
        if tasks.iter().flatten().chain(&validation).any(|(x, _)| x.len() != input_dim) {
            return Err(Error::Interface("dataset point of the wrong dimension".into()));
        }
        let seeds = SeedTree::new(shuffle_seed);
        let num_tasks = tasks.len();
        let task_of = |e: usize| ((e * num_tasks) / num_epochs).min(num_tasks - 1);
        let mut schedule = Vec::new();
        let mut total_steps = 0;
        // One extra epoch supplies the inputs shown alongside the final targets.
        for epoch in 0..=num_epochs {
            let task = task_of(epoch);
            let batches = supervised_epoch_stream(tasks[task].len(), batch_size, &mut seeds.rng("epoch", epoch as u64));
            if epoch < num_epochs {
                total_steps += batches.len();
            }
            schedule.extend(batches.into_iter().map(|indices| ScheduledBatch { task, epoch, indices }));
        }
        Ok(Self { input_dim, output, tasks, validation, batch_size, num_epochs, schedule, total_steps })
    }

    /// Optimizer steps in `num_epochs` epochs.
    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn batch(&self, t: usize) -> &ScheduledBatch {
        &self.schedule[t.min(self.schedule.len() - 1)]
    }

    /// Task whose data is trained on at step `t` (targets of batch `t − 1`).
    pub fn task_trained_at(&self, t: usize) -> usize {
        self.batch(t.saturating_sub(1)).task
    }

    /// First step whose inputs come from a later task than step 0, if any.
    pub fn boundary_steps(&self) -> Vec<usize> {
        (1..=self.total_steps).filter(|&t| self.batch(t).task != self.batch(t - 1).task).collect()
    }

    pub fn inputs_at(&self, t: usize) -> Vec<Vec<f64>> {
        let b = self.batch(t);
        b.indices.iter().map(|&i| self.tasks[b.task][i].0.clone()).collect()
    }

    pub fn targets_at(&self, t: usize) -> Vec<Target> {
        let b = self.batch(t);
        b.indices.iter().map(|&i| self.tasks[b.task][i].1.clone()).collect()
    }

    /// Training set of the task active at time `t`.
    pub fn training_set(&self, t: usize) -> &LabelledSet {
        &self.tasks[self.batch(t).task]
    }

    /// Validation pairs with real-valued targets.
    pub fn validation_pairs(&self) -> Vec<(Vec<f64>, f64)> {
        self.validation.iter().map(|(x, t)| (x.clone(), t.as_real())).collect()
    }

    /// Class-incremental view: epoch `e`, batch `b` of that epoch, and
    /// whether it is the first batch of a new task.
    pub fn class_incremental_stream(&self, epoch: usize, batch_index: usize) -> Option<(&ScheduledBatch, bool)> {
        let pos = self.schedule.iter().position(|b| b.epoch == epoch)? + batch_index;
        let b = self.schedule.get(pos).filter(|b| b.epoch == epoch)?;
        let boundary = pos > 0 && self.schedule[pos - 1].task != b.task;
        Some((b, boundary))
    }
}

impl Environment for SupervisedEnv {
    fn interface(&self) -> Interface {
        Interface { observation: ObservationSpace::Supervised { input_dim: self.input_dim }, output: self.output }
    }

    fn initial(&self, _rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::SupervisedPair { inputs: self.inputs_at(0), prev_targets: None })
    }

    fn next(&self, history: &History, _output: &Output, _rng: &mut StreamRng) -> Result<Observation> {
        let t = history.time() + 1;
        Ok(Observation::SupervisedPair { inputs: self.inputs_at(t), prev_targets: Some(self.targets_at(t - 1)) })
    }

    fn hybrid_next(&self, anchor_time: usize, _history: &History, output: &Output, rng: &mut StreamRng) -> Result<Observation> {
        let targets = match output {
            Output::PredictedTargets(ts) => ts.clone(),
            other => return Err(Error::Interface(format!("supervised hybrid needs predicted targets, got {other:?}"))),
        };
        let pool = self.training_set(anchor_time);
        let inputs = (0..self.batch_size).map(|_| pool[rng.random_range(0..pool.len())].0.clone()).collect();
        Ok(Observation::SupervisedPair { inputs, prev_targets: Some(targets) })
    }
}

/// Sinusoid regression settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidConfig {
    #[serde(default = "default_range")]
    pub range: (f64, f64),
    #[serde(default = "default_sin_noise")]
    pub noise: f64,
    #[serde(default = "default_sin_train")]
    pub num_samples: usize,
    #[serde(default = "default_val")]
    pub num_val_samples: usize,
    #[serde(default = "default_sin_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_range() -> (f64, f64) {
    (-4.0, 4.0)
}
fn default_sin_noise() -> f64 {
    0.1
}
fn default_sin_train() -> usize {
    40
}
fn default_val() -> usize {
    100
}
fn default_sin_batch() -> usize {
    10
}
fn default_epochs() -> usize {
    30
}

impl Default for SinusoidConfig {
    fn default() -> Self {
        Self {
            range: default_range(),
            noise: default_sin_noise(),
            num_samples: default_sin_train(),
            num_val_samples: default_val(),
            batch_size: default_sin_batch(),
            epochs: default_epochs(),
        }
    }
}

/// `y = sin(x) + ε`, `x ~ U(range)`, `ε ~ N(0, noise²)`.
pub fn gen_sinusoid(n: usize, range: (f64, f64), noise: f64, rng: &mut StreamRng) -> Result<LabelledSet> {
    if !(range.1 > range.0) || !(noise >= 0.0) {
        return Err(Error::Precondition("invalid sinusoid range or noise".into()));
    }
    let eps = Normal::new(0.0, noise).map_err(|e| Error::Precondition(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let x = rng.random_range(range.0..range.1);
            (vec![x], Target::Real(x.sin() + eps.sample(rng)))
        })
        .collect())
}

pub fn sinusoid_env(cfg: &SinusoidConfig, seed: u64) -> Result<SupervisedEnv> {
    let seeds = SeedTree::new(seed).child("sinusoid", 0);
    let train = gen_sinusoid(cfg.num_samples, cfg.range, cfg.noise, &mut seeds.rng("train", 0))?;
    let val = gen_sinusoid(cfg.num_val_samples, cfg.range, cfg.noise, &mut seeds.rng("validation", 0))?;
    SupervisedEnv::new(1, OutputSpace::Real, vec![train], val, cfg.batch_size, cfg.epochs, seeds.child("shuffle", 0).root())
}

/// Two interleaved half circles. Class 0 is the upper moon `(cos θ, sin θ)`,
/// class 1 the lower moon `(1 − cos θ, 0.5 − sin θ)`, θ evenly spaced on
/// `[0, π]`; Gaussian noise is added per coordinate and the list shuffled.
pub fn gen_two_moons(n: usize, noise: f64, rng: &mut StreamRng) -> Result<Vec<(Vec<f64>, usize)>> {
    if n == 0 || !(noise >= 0.0) {
        return Err(Error::Precondition("two moons needs n ≥ 1 and noise ≥ 0".into()));
    }
    let n_upper = n.div_ceil(2);
    let n_lower = n - n_upper;
    let angles = |m: usize| -> Vec<f64> {
        if m <= 1 {
            vec![0.0; m]
        } else {
            (0..m).map(|i| std::f64::consts::PI * i as f64 / (m - 1) as f64).collect()
        }
    };
    let mut pts: Vec<(Vec<f64>, usize)> = angles(n_upper)
        .into_iter()
        .map(|a| (vec![a.cos(), a.sin()], 0))
        .chain(angles(n_lower).into_iter().map(|a| (vec![1.0 - a.cos(), 0.5 - a.sin()], 1)))
        .collect();
    if noise > 0.0 {
        let eps = Normal::new(0.0, noise).map_err(|e| Error::Precondition(e.to_string()))?;
        for (p, _) in pts.iter_mut() {
            for v in p.iter_mut() {
                *v += eps.sample(rng);
            }
        }
    }
    pts.shuffle(rng);
    Ok(pts)
}

/// Two-moons classification settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoMoonsConfig {
    #[serde(default = "default_moons_noise")]
    pub noise: f64,
    /// Training points, or points per task in class-incremental mode.
    #[serde(default = "default_moons_train")]
    pub num_samples: usize,
    #[serde(default = "default_val")]
    pub num_val_samples: usize,
    #[serde(default = "default_moons_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub class_incremental: bool,
}

fn default_moons_noise() -> f64 {
    0.1
}
fn default_moons_train() -> usize {
    100
}
fn default_moons_batch() -> usize {
    25
}

impl Default for TwoMoonsConfig {
    fn default() -> Self {
        Self {
            noise: default_moons_noise(),
            num_samples: default_moons_train(),
            num_val_samples: default_val(),
            batch_size: default_moons_batch(),
            epochs: default_epochs(),
            class_incremental: false,
        }
    }
}

fn labelled(points: Vec<(Vec<f64>, usize)>) -> LabelledSet {
    points.into_iter().map(|(x, c)| (x, Target::Class(c))).collect()
}

/// Two-moons classification; in class-incremental mode task 0 holds the
/// class-0 moon and task 1 the class-1 moon, switching at the middle epoch.
pub fn two_moons_env(cfg: &TwoMoonsConfig, seed: u64) -> Result<SupervisedEnv> {
    let seeds = SeedTree::new(seed).child("two-moons", 0);
    let val = labelled(gen_two_moons(cfg.num_val_samples, cfg.noise, &mut seeds.rng("validation", 0))?);
    let tasks = if cfg.class_incremental {
        let all = gen_two_moons(2 * cfg.num_samples, cfg.noise, &mut seeds.rng("train", 0))?;
        let (a, b): (Vec<_>, Vec<_>) = all.into_iter().partition(|(_, c)| *c == 0);
        vec![labelled(a), labelled(b)]
    } else {
        vec![labelled(gen_two_moons(cfg.num_samples, cfg.noise, &mut seeds.rng("train", 0))?)]
    };
    SupervisedEnv::new(2, OutputSpace::Classes(2), tasks, val, cfg.batch_size, cfg.epochs, seeds.child("shuffle", 0).root())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_moons_lie_on_unit_circles() {
        let pts = gen_two_moons(101, 0.0, &mut SeedTree::new(1).rng("m", 0)).unwrap();
        for (p, c) in &pts {
            if *c == 0 {
                assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-12 && p[1] >= 0.0);
            } else {
                let (dx, dy) = (p[0] - 1.0, p[1] - 0.5);
                assert!(((dx * dx + dy * dy).sqrt() - 1.0).abs() < 1e-12 && p[1] <= 0.5);
            }
        }
    }

    #[test]
    fn moons_are_balanced_and_deterministic() {
        let a = gen_two_moons(100, 0.1, &mut SeedTree::new(4).rng("m", 0)).unwrap();
        assert_eq!(a.iter().filter(|(_, c)| *c == 0).count(), 50);
        let b = gen_two_moons(100, 0.1, &mut SeedTree::new(4).rng("m", 0)).unwrap();
        assert_eq!(a, b);
        let odd = gen_two_moons(7, 0.1, &mut SeedTree::new(4).rng("m", 0)).unwrap();
        assert_eq!(odd.iter().filter(|(_, c)| *c == 0).count(), 4);
    }

    #[test]
    fn epoch_stream_partitions() {
        let mut rng = SeedTree::new(2).rng("e", 0);
        let b = supervised_epoch_stream(40, 10, &mut rng);
        assert_eq!(b.len(), 4);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
        let c = supervised_epoch_stream(40, 10, &mut rng);
        assert_ne!(b, c);
        let short = supervised_epoch_stream(7, 3, &mut rng);
        assert_eq!(short.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![3, 3, 1]);
    }

    #[test]
    fn regression_schedule_has_120_steps() {
        let env = sinusoid_env(&SinusoidConfig::default(), 0).unwrap();
        assert_eq!(env.total_steps(), 120);
        assert!(env.tasks[0].iter().all(|(x, _)| (-4.0..4.0).contains(&x[0])));
    }

    #[test]
    fn class_incremental_boundary() {
        let cfg = TwoMoonsConfig { class_incremental: true, ..Default::default() };
        let env = two_moons_env(&cfg, 3).unwrap();
        assert_eq!(env.tasks[0].len(), 100);
        assert_eq!(env.tasks[1].len(), 100);
        assert_eq!(env.total_steps(), 120);
        assert_eq!(env.boundary_steps(), vec![60]);
        let (b0, flag0) = env.class_incremental_stream(0, 0).unwrap();
        assert!(!flag0 && b0.indices.iter().all(|&i| env.tasks[0][i].1 == Target::Class(0)));
        let (b15, flag15) = env.class_incremental_stream(15, 0).unwrap();
        assert!(flag15 && b15.task == 1);
        assert!(env.targets_at(59).iter().all(|t| *t == Target::Class(0)));
        assert!(env.targets_at(60).iter().all(|t| *t == Target::Class(1)));
    }
}

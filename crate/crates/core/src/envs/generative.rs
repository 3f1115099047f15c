//! Two-moons density modelling: the learner receives data batches and emits
//! generated samples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::supervised::{gen_two_moons, supervised_epoch_stream};
use crate::error::{Error, Result};
use crate::process::{Environment, History, Interface, Observation, ObservationSpace, Output, OutputSpace};
use crate::rng::{SeedTree, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_samples")]
    pub num_samples: usize,
    #[serde(default = "default_heldout")]
    pub num_heldout: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_noise() -> f64 {
    0.05
}
fn default_samples() -> usize {
    10_000
}
fn default_batch() -> usize {
    2500
}
fn default_heldout() -> usize {
    1000
}
fn default_epochs() -> usize {
    250
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        Self {
            noise: default_noise(),
            num_samples: default_samples(),
            num_heldout: default_heldout(),
            batch_size: default_batch(),
            epochs: default_epochs(),
        }
    }
}

/// Observation at step `t` is batch `t` of a per-epoch shuffle of the data.
/// In hybrid draws the observation is the learner's own generated batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeEnv {
    pub data: Vec<Vec<f64>>,
    pub heldout: Vec<Vec<f64>>,
    pub batch_size: usize,
    pub epochs: usize,
    schedule: Vec<Vec<usize>>,
    total_steps: usize,
}

impl GenerativeEnv {
    pub fn new(cfg: &GenerativeConfig, seed: u64) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.epochs == 0 {
            return Err(Error::Precondition("batch size and epochs must be positive".into()));
        }
        let seeds = SeedTree::new(seed).child("generative", 0);
        let strip = |v: Vec<(Vec<f64>, usize)>| v.into_iter().map(|(x, _)| x).collect::<Vec<_>>();
        let data = strip(gen_two_moons(cfg.num_samples, cfg.noise, &mut seeds.rng("train", 0))?);
        let heldout = strip(gen_two_moons(cfg.num_heldout.max(1), cfg.noise, &mut seeds.rng("heldout", 0))?);
        let mut schedule = Vec::new();
        let mut total_steps = 0;
        for epoch in 0..=cfg.epochs {
            let b = supervised_epoch_stream(data.len(), cfg.batch_size, &mut seeds.rng("epoch", epoch as u64));
            if epoch < cfg.epochs {
                total_steps += b.len();
            }
            schedule.extend(b);
        }
        Ok(Self { data, heldout, batch_size: cfg.batch_size, epochs: cfg.epochs, schedule, total_steps })
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn batch_at(&self, t: usize) -> Vec<Vec<f64>> {
        self.schedule[t.min(self.schedule.len() - 1)].iter().map(|&i| self.data[i].clone()).collect()
    }

    /// A random batch of training points.
    pub fn sample_batch(&self, n: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.data[rng.random_range(0..self.data.len())].clone()).collect()
    }
}

impl Environment for GenerativeEnv {
    fn interface(&self) -> Interface {
        Interface { observation: ObservationSpace::Generative { dim: 2 }, output: OutputSpace::Samples { dim: 2 } }
    }

    fn initial(&self, _rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::GenSample { samples: self.batch_at(0) })
    }

    fn next(&self, history: &History, _output: &Output, _rng: &mut StreamRng) -> Result<Observation> {
        Ok(Observation::GenSample { samples: self.batch_at(history.time() + 1) })
    }

    fn hybrid_next(&self, _anchor: usize, _history: &History, output: &Output, _rng: &mut StreamRng) -> Result<Observation> {
        match output {
            Output::GeneratedSamples(s) => Ok(Observation::GenSample { samples: s.clone() }),
            other => Err(Error::Interface(format!("generative hybrid needs generated samples, got {other:?}"))),
        }
    }
}

//! Experiment configuration: one JSON document per run, with dotted-path
//! overrides for sweeps and a stable content hash.

use std::path::Path;

use forgetmeter::envs::{CartpoleParams, GenerativeConfig, SinusoidConfig, TwoMoonsConfig};
use forgetmeter::learners::dqn::DqnConfig;
use forgetmeter::learners::flow::FlowConfig;
use forgetmeter::learners::mlp::OptimizerConfig;
use forgetmeter::{Bandwidth, DivergenceKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Network settings shared by the supervised settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_dim: usize,
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_noise_var")]
    pub initial_noise_var: f64,
}

fn default_noise_var() -> f64 {
    1.0
}

/// Task and learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Setting {
    Regression {
        #[serde(default)]
        env: SinusoidConfig,
        learner: NetConfig,
    },
    Classification {
        #[serde(default)]
        env: TwoMoonsConfig,
        learner: NetConfig,
    },
    Generative {
        #[serde(default)]
        env: GenerativeConfig,
        #[serde(default)]
        learner: FlowConfig,
    },
    Dqn {
        #[serde(default)]
        learner: DqnConfig,
        #[serde(default)]
        cartpole: CartpoleParams,
        #[serde(default = "default_eval_every")]
        eval_every: usize,
        #[serde(default = "default_eval_steps")]
        eval_steps: usize,
        #[serde(default = "default_probe_states")]
        probe_states: usize,
    },
    /// A learner that never changes, on the regression task.
    Degenerate {
        #[serde(default)]
        env: SinusoidConfig,
    },
}

fn default_eval_every() -> usize {
    1000
}
fn default_eval_steps() -> usize {
    1000
}
fn default_probe_states() -> usize {
    20
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::Regression { .. } => "regression",
            Setting::Classification { .. } => "classification",
            Setting::Generative { .. } => "generative",
            Setting::Dqn { .. } => "dqn",
            Setting::Degenerate { .. } => "degenerate",
        }
    }

    pub fn default_divergence(&self) -> DivergenceKind {
        match self {
            Setting::Regression { .. } | Setting::Degenerate { .. } => DivergenceKind::KlGaussian,
            Setting::Classification { .. } | Setting::Dqn { .. } => DivergenceKind::KlCategorical,
            Setting::Generative { .. } => DivergenceKind::MmdRbf(Bandwidth::Median),
        }
    }
}

/// Forgetting-measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterSettings {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default = "default_particles")]
    pub num_particles: usize,
    /// Steps between measurements; five percent of the run when absent.
    #[serde(default)]
    pub every: Option<usize>,
    #[serde(default = "default_num_probes")]
    pub num_probes: usize,
    #[serde(default)]
    pub divergence: Option<DivergenceKind>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_drop")]
    pub max_dropped_fraction: f64,
    /// Sync-proximity window for value-based learners; `k` when absent.
    #[serde(default)]
    pub sync_window: Option<u64>,
}

fn yes() -> bool {
    true
}
fn default_ks() -> Vec<usize> {
    vec![1, 2, 5, 10, 20, 40]
}
fn default_particles() -> usize {
    1000
}
fn default_num_probes() -> usize {
    20
}
fn default_bootstrap() -> usize {
    100
}
fn default_drop() -> f64 {
    0.1
}

impl Default for MeterSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            ks: default_ks(),
            num_particles: default_particles(),
            every: None,
            num_probes: default_num_probes(),
            divergence: None,
            bootstrap_resamples: default_bootstrap(),
            max_dropped_fraction: default_drop(),
            sync_window: None,
        }
    }
}

impl MeterSettings {
    pub fn max_k(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(0)
    }

    /// Measurement times `every, 2·every, …` up to `total_steps`.
    pub fn schedule(&self, total_steps: usize) -> Vec<usize> {
        if !self.enabled {
            return Vec::new();
        }
        self.cadence(total_steps)
    }

    /// Measurement steps regardless of `enabled`.
    pub fn cadence(&self, total_steps: usize) -> Vec<usize> {
        let every = self.every.unwrap_or_else(|| (total_steps / 20).max(1));
        (1..).map(|i| i * every).take_while(|&t| t <= total_steps).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub setting: Setting,
    #[serde(default)]
    pub meter: MeterSettings,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Overrides the setting's natural run length.
    #[serde(default)]
    pub total_steps: Option<usize>,
    /// Grid resolution of the decision-surface panels for classification.
    #[serde(default)]
    pub grid_panels: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(format!("{}: {m}", self.name)));
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if self.total_steps == Some(0) {
            return bad("total_steps must be positive");
        }
        let m = &self.meter;
        if m.enabled && (m.ks.is_empty() || m.ks.contains(&0)) {
            return bad("ks must be non-empty and positive");
        }
        if m.enabled && (m.num_particles == 0 || m.num_probes == 0 || m.every == Some(0)) {
            return bad("num_particles, num_probes and every must be positive");
        }
        if !(0.0..=1.0).contains(&m.max_dropped_fraction) {
            return bad("max_dropped_fraction must lie in [0, 1]");
        }
        if let Some(d) = &m.divergence {
            d.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        match &self.setting {
            Setting::Regression { learner, .. } | Setting::Classification { learner, .. } => {
                learner.optimizer.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                if learner.hidden_dim == 0 {
                    return bad("hidden_dim must be positive");
                }
            }
            Setting::Generative { learner, .. } => learner.optimizer.validate().map_err(|e| HarnessError::Config(e.to_string()))?,
            Setting::Dqn { learner, eval_every, eval_steps, probe_states, .. } => {
                learner.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                if *eval_every == 0 || *eval_steps == 0 || *probe_states == 0 {
                    return bad("eval_every, eval_steps and probe_states must be positive");
                }
            }
            Setting::Degenerate { .. } => {}
        }
        Ok(())
    }

    pub fn divergence(&self) -> DivergenceKind {
        self.meter.divergence.unwrap_or_else(|| self.setting.default_divergence())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(compact.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with the field at dotted `path` replaced by `value`.
    pub fn with_override(&self, path: &str, value: Value) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        set_path(&mut doc, path, value)?;
        let cfg: Self = serde_json::from_value(doc).map_err(|e| HarnessError::Config(format!("override {path}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Replace the existing field at dotted `path`.
pub fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    for part in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| HarnessError::Config(format!("no field {path}")))?;
    }
    *cur = value;
    Ok(())
}

/// Parse a sweep value: JSON when it parses, a string otherwise.
pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap_or_else(|_| Value::String(text.trim().to_string()))
}

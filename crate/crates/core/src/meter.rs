//! Particle Monte Carlo estimates of the k-step propensity to forget.
//!
//! At time `t` the live state is cloned into `M` particles. Each particle is
//! rolled `k` learning-mode steps against the hybrid environment, so every
//! update is made on targets drawn from the particle's own predictive. The
//! mixture of the particles' probe predictives approximates the expected
//! post-update futures, and `Γ_k(t)` is the probe-averaged divergence between
//! the reference predictives and that mixture.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::futures::{probe_predictives, rollout_with, EvalProbe, RolloutMode};
use crate::predictive::{divergence, DivergenceKind, PredictiveDistribution};
use crate::process::{Environment, History, Learner};
use crate::rng::SeedTree;

/// How particle predictives are combined before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MixturePolicy {
    /// `D(reference ‖ mixture of particles)`.
    #[default]
    MixtureDivergence,
    /// `mean_m D(reference ‖ particle m)`; an upper bound for convex `D`.
    MeanPerParticleDivergence,
}

/// Argument order of the divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    ReferenceToMixture,
    MixtureToReference,
}

/// Estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingConfig {
    pub k: usize,
    pub num_particles: usize,
    pub divergence: DivergenceKind,
    #[serde(default)]
    pub mixture: MixturePolicy,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    /// Floor applied to categorical mixture probabilities; `None` reports
    /// support violations as infinite.
    #[serde(default)]
    pub kl_smoothing: Option<f64>,
    #[serde(default = "default_drop_fraction")]
    pub max_dropped_fraction: f64,
}

fn default_bootstrap() -> usize {
    100
}

fn default_drop_fraction() -> f64 {
    0.1
}

impl ForgettingConfig {
    pub fn new(k: usize, num_particles: usize, divergence: DivergenceKind) -> Self {
        Self {
            k,
            num_particles,
            divergence,
            mixture: MixturePolicy::default(),
            direction: Direction::default(),
            bootstrap_resamples: default_bootstrap(),
            kl_smoothing: None,
            max_dropped_fraction: default_drop_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.num_particles == 0 {
            return Err(Error::Precondition("k and num_particles must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_dropped_fraction) {
            return Err(Error::Precondition("max_dropped_fraction must lie in [0, 1]".into()));
        }
        self.divergence.validate()
    }
}

/// `Γ̂_k(t)` with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingEstimate {
    pub time: usize,
    pub k: usize,
    pub num_particles: usize,
    pub gamma: f64,
    pub std_error: f64,
    pub per_probe: Vec<f64>,
    /// Probes whose divergence was infinite (support violation).
    pub infinite_probes: Vec<usize>,
    pub dropped_particles: usize,
}

impl ForgettingEstimate {
    pub fn is_infinite(&self) -> bool {
        !self.infinite_probes.is_empty()
    }
}

/// Average of particle predictives.
///
/// Categorical: component-wise mean. Gaussian: moment-matched. Empirical:
/// pooled samples. Diracs collapse to a Dirac when they agree and to an
/// empirical law over their values otherwise.
pub fn mixture_predictive(particles: &[PredictiveDistribution]) -> Result<PredictiveDistribution> {
    mixture_of(particles.iter())
}

fn mixture_of<'a, I>(particles: I) -> Result<PredictiveDistribution>
where
    I: Iterator<Item = &'a PredictiveDistribution> + Clone,
{
    use PredictiveDistribution as P;
    let mut it = particles.clone();
    let first = it.next().ok_or_else(|| Error::Precondition("empty particle list".into()))?;
    let n = particles.clone().count() as f64;
    if it.all(|d| d == first) {
        return Ok(first.clone());
    }
    match first {
        P::Categorical(p0) => {
            let mut acc = vec![0.0; p0.len()];
            for d in particles {
                match d {
                    P::Categorical(p) if p.len() == acc.len() => {
                        acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
                    }
                    _ => return Err(Error::MixedVariants),
                }
            }
            let s: f64 = acc.iter().sum();
            Ok(P::Categorical(acc.into_iter().map(|a| a / s).collect()))
        }
        P::Gaussian { .. } => {
            let (mut m1, mut m2) = (0.0, 0.0);
            for d in particles {
                match d {
                    P::Gaussian { mean, var } => {
                        m1 += mean;
                        m2 += var + mean * mean;
                    }
                    _ => return Err(Error::MixedVariants),
                }
            }
            let mean = m1 / n;
            let var = (m2 / n - mean * mean).max(f64::MIN_POSITIVE);
            Ok(P::Gaussian { mean, var })
        }
        P::DiagGaussian { means: mu0, .. } => {
            let dim = mu0.len();
            let (mut m1, mut m2) = (vec![0.0; dim], vec![0.0; dim]);
            for d in particles {
                match d {
                    P::DiagGaussian { means, vars } if means.len() == dim => {
                        for i in 0..dim {
                            m1[i] += means[i];
                            m2[i] += vars[i] + means[i] * means[i];
                        }
                    }
                    _ => return Err(Error::MixedVariants),
                }
            }
            let means: Vec<f64> = m1.iter().map(|x| x / n).collect();
            let vars = (0..dim)
                .map(|i| (m2[i] / n - means[i] * means[i]).max(f64::MIN_POSITIVE))
                .collect();
            Ok(P::DiagGaussian { means, vars })
        }
        P::Dirac(v0) => {
            let mut values = Vec::new();
            let mut all_same = true;
            for d in particles {
                match d {
                    P::Dirac(v) => {
                        all_same &= v == v0;
                        values.push(vec![*v]);
                    }
                    _ => return Err(Error::MixedVariants),
                }
            }
            Ok(if all_same { P::Dirac(*v0) } else { P::Empirical(values) })
        }
        P::Empirical(_) => {
            let mut pooled = Vec::new();
            for d in particles {
                match d {
                    P::Empirical(s) => pooled.extend(s.iter().cloned()),
                    _ => return Err(Error::MixedVariants),
                }
            }
            Ok(P::Empirical(pooled))
        }
    }
}

/// Per-particle probe predictives recorded at each requested k.
type ParticleRecord = Vec<Vec<PredictiveDistribution>>;

fn run_particles<E: Environment, L: Learner>(
    learner: &L,
    env: &E,
    anchor: &L::State,
    history: &History,
    probes: &EvalProbe,
    ks: &[usize],
    num_particles: usize,
    mode: RolloutMode,
    seeds: &SeedTree,
) -> Result<Vec<Option<ParticleRecord>>> {
    let kmax = *ks.last().expect("non-empty ks");
    (0..num_particles)
        .into_par_iter()
        .map(|m| {
            let mut rng = seeds.rng("particle", m as u64);
            let mut record: ParticleRecord = Vec::with_capacity(ks.len());
            let result = rollout_with(learner, env, anchor, history, kmax, mode, &mut rng, |s, z| {
                if ks.binary_search(&s).is_ok() {
                    record.push(probe_predictives(learner, z, probes)?);
                }
                Ok(())
            });
            match result {
                Ok(_) => Ok(Some(record)),
                Err(e) if matches!(e.root(), Error::NumericalDivergence(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn probe_divergence(
    cfg: &ForgettingConfig,
    reference: &PredictiveDistribution,
    particles: &[&PredictiveDistribution],
) -> Result<f64> {
    let d = |a: &PredictiveDistribution, b: &PredictiveDistribution| match cfg.direction {
        Direction::ReferenceToMixture => divergence(cfg.divergence, a, b, cfg.kl_smoothing),
        Direction::MixtureToReference => divergence(cfg.divergence, b, a, cfg.kl_smoothing),
    };
    let r = match cfg.mixture {
        MixturePolicy::MixtureDivergence => {
            let mix = mixture_of(particles.iter().copied())?;
            d(reference, &mix)
        }
        MixturePolicy::MeanPerParticleDivergence => {
            let mut acc = 0.0;
            for p in particles {
                acc += d(reference, p)?;
            }
            Ok(acc / particles.len() as f64)
        }
    };
    match r {
        Err(Error::InfiniteDivergence(_)) => Ok(f64::INFINITY),
        other => other,
    }
}

fn gamma_from(
    cfg: &ForgettingConfig,
    reference: &[PredictiveDistribution],
    particles: &[&[PredictiveDistribution]],
) -> Result<Vec<f64>> {
    let mut column: Vec<&PredictiveDistribution> = Vec::with_capacity(particles.len());
    let mut per_probe = Vec::with_capacity(reference.len());
    for (j, r) in reference.iter().enumerate() {
        column.clear();
        column.extend(particles.iter().map(|p| &p[j]));
        per_probe.push(probe_divergence(cfg, r, &column)?);
    }
    Ok(per_probe)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `Γ̂_k(t)` for every k in `ks`, sharing particles, probes and reference.
///
/// Particle `m` uses the stream `("particle", m)` of `seeds`; callers pass a
/// subtree specific to `t` so estimates at different times are independent.
pub fn estimate_gamma_curve<E: Environment, L: Learner>(
    learner: &L,
    env: &E,
    state: &L::State,
    history: &History,
    probes: &EvalProbe,
    cfg: &ForgettingConfig,
    ks: &[usize],
    seeds: &SeedTree,
) -> Result<Vec<ForgettingEstimate>> {
    cfg.validate()?;
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(Error::Precondition("k values must be non-empty and positive".into()));
    }
    let anchor = learner.prepare_estimate(state)?;
    let m = cfg.num_particles;

    let learning = run_particles(learner, env, &anchor, history, probes, &ks, m, RolloutMode::Learning, seeds)?;
    let kept: Vec<&ParticleRecord> = learning.iter().flatten().collect();
    let dropped = m - kept.len();
    if kept.is_empty() || dropped as f64 > cfg.max_dropped_fraction * m as f64 {
        return Err(Error::TooManyDroppedParticles { dropped, total: m });
    }

    // References per k: the probe predictives of the live state, or, when
    // predictions read auxiliary state, the inference-mode futures at k.
    let references: Vec<Vec<PredictiveDistribution>> = if learner.predictions_follow_auxiliary_state() {
        let inference =
            run_particles(learner, env, &anchor, history, probes, &ks, m, RolloutMode::Inference, seeds)?;
        let inf: Vec<&ParticleRecord> = inference.iter().flatten().collect();
        if inf.is_empty() {
            return Err(Error::TooManyDroppedParticles { dropped: m, total: m });
        }
        (0..ks.len())
            .map(|ki| {
                let n_probes = inf[0][ki].len();
                (0..n_probes)
                    .map(|j| mixture_of(inf.iter().map(|r| &r[ki][j])))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?
    } else {
        let r = probe_predictives(learner, &anchor, probes)?;
        vec![r; ks.len()]
    };

    let time = history.time();
    let mut out = Vec::with_capacity(ks.len());
    for (ki, &k) in ks.iter().enumerate() {
        let rows: Vec<&[PredictiveDistribution]> = kept.iter().map(|r| r[ki].as_slice()).collect();
        let per_probe = gamma_from(cfg, &references[ki], &rows)?;
        let infinite_probes: Vec<usize> =
            per_probe.iter().enumerate().filter(|(_, v)| v.is_infinite()).map(|(j, _)| j).collect();
        let gamma = mean(&per_probe);
        let std_error = if !infinite_probes.is_empty() {
            f64::INFINITY
        } else if cfg.bootstrap_resamples == 0 || rows.len() < 2 {
            0.0
        } else {
            let mut rng = seeds.rng("bootstrap", k as u64);
            let mut stats = Vec::with_capacity(cfg.bootstrap_resamples);
            let mut sample: Vec<&[PredictiveDistribution]> = Vec::with_capacity(rows.len());
            for _ in 0..cfg.bootstrap_resamples {
                sample.clear();
                sample.extend((0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]));
                stats.push(mean(&gamma_from(cfg, &references[ki], &sample)?));
            }
            let finite: Vec<f64> = stats.into_iter().filter(|s| s.is_finite()).collect();
            if finite.len() < 2 {
                0.0
            } else {
                let mu = mean(&finite);
                (finite.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / (finite.len() - 1) as f64).sqrt()
            }
        };
        out.push(ForgettingEstimate {
            time,
            k,
            num_particles: m,
            gamma,
            std_error,
            per_probe,
            infinite_probes,
            dropped_particles: dropped,
        });
    }
    Ok(out)
}

/// `Γ̂_k(t)` at `cfg.k`.
pub fn estimate_gamma<E: Environment, L: Learner>(
    learner: &L,
    env: &E,
    state: &L::State,
    history: &History,
    probes: &EvalProbe,
    cfg: &ForgettingConfig,
    seeds: &SeedTree,
) -> Result<ForgettingEstimate> {
    let mut v = estimate_gamma_curve(learner, env, state, history, probes, cfg, &[cfg.k], seeds)?;
    Ok(v.remove(0))
}

/// Probe predictives of the live state and the mixture of `k`-step particle
/// predictives, as compared by the estimator.
pub fn reference_and_mixture<E: Environment, L: Learner>(
    learner: &L,
    env: &E,
    state: &L::State,
    history: &History,
    probes: &EvalProbe,
    k: usize,
    num_particles: usize,
    seeds: &SeedTree,
) -> Result<(Vec<PredictiveDistribution>, Vec<PredictiveDistribution>)> {
    if k == 0 || num_particles == 0 {
        return Err(Error::Precondition("k and num_particles must be positive".into()));
    }
    let anchor = learner.prepare_estimate(state)?;
    let reference = probe_predictives(learner, &anchor, probes)?;
    let particles = run_particles(learner, env, &anchor, history, probes, &[k], num_particles, RolloutMode::Learning, seeds)?;
    let kept: Vec<&ParticleRecord> = particles.iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::TooManyDroppedParticles { dropped: num_particles, total: num_particles });
    }
    let mixture = (0..reference.len()).map(|j| mixture_of(kept.iter().map(|r| &r[0][j]))).collect::<Result<Vec<_>>>()?;
    Ok((reference, mixture))
}

/// Outcome of a consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Forgetting,
}

/// Consistent iff `Γ̂_k ≤ threshold`.
pub fn check_consistency<E: Environment, L: Learner>(
    learner: &L,
    env: &E,
    state: &L::State,
    history: &History,
    probes: &EvalProbe,
    cfg: &ForgettingConfig,
    threshold: f64,
    seeds: &SeedTree,
) -> Result<(Verdict, ForgettingEstimate)> {
    if !(threshold >= 0.0) {
        return Err(Error::Precondition(format!("threshold must be non-negative, got {threshold}")));
    }
    let est = estimate_gamma(learner, env, state, history, probes, cfg, seeds)?;
    let verdict = if est.gamma <= threshold { Verdict::Consistent } else { Verdict::Forgetting };
    Ok((verdict, est))
}

/// `Γ̂_k(t)` as a function of k.
pub fn sweep_k<E: Environment, L: Learner>(
    learner: &L,
    env: &E,
    state: &L::State,
    history: &History,
    probes: &EvalProbe,
    base: &ForgettingConfig,
    k_values: &[usize],
    seeds: &SeedTree,
) -> Result<Vec<(usize, ForgettingEstimate)>> {
    if k_values.is_empty() {
        return Err(Error::Precondition("empty k list".into()));
    }
    let curve = estimate_gamma_curve(learner, env, state, history, probes, base, k_values, seeds)?;
    Ok(curve.into_iter().map(|e| (e.k, e)).collect())
}

/// Linear-interpolated quantile of `values` at `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Monte Carlo noise threshold: the 99th percentile of `Γ̂` over resampled
/// seeds for a learner known to be consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCalibration {
    pub tau: f64,
    pub samples: Vec<f64>,
}

pub const TAU_QUANTILE: f64 = 0.99;

pub fn calibrate_tau<F>(seeds: impl IntoIterator<Item = u64>, mut gamma_for_seed: F) -> Result<TauCalibration>
where
    F: FnMut(u64) -> Result<f64>,
{
    let samples = seeds.into_iter().map(&mut gamma_for_seed).collect::<Result<Vec<f64>>>()?;
    if samples.is_empty() {
        return Err(Error::Precondition("calibration needs at least one seed".into()));
    }
    Ok(TauCalibration { tau: quantile(&samples, TAU_QUANTILE), samples })
}

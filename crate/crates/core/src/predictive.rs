//! Predictive distributions and the divergences used to compare them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Tolerance on the unit sum of categorical probabilities.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Lower bound on residual variances fitted for regression predictives.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// A learner's belief about its next output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictiveDistribution {
    Categorical(Vec<f64>),
    Gaussian { mean: f64, var: f64 },
    DiagGaussian { means: Vec<f64>, vars: Vec<f64> },
    Dirac(f64),
    Empirical(Vec<Vec<f64>>),
}

/// A draw from a predictive distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Class(usize),
    Real(f64),
    Vector(Vec<f64>),
}

impl PredictiveDistribution {
    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Categorical(_) => "categorical",
            Self::Gaussian { .. } => "gaussian",
            Self::DiagGaussian { .. } => "diag-gaussian",
            Self::Dirac(_) => "dirac",
            Self::Empirical(_) => "empirical",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Categorical(p) => check_simplex(p),
            Self::Gaussian { mean, var } => {
                if !mean.is_finite() {
                    return Err(Error::Domain(format!("non-finite mean {mean}")));
                }
                check_variance(*var)
            }
            Self::DiagGaussian { means, vars } => {
                if means.len() != vars.len() || means.is_empty() {
                    return Err(Error::Domain("mean/variance length mismatch".into()));
                }
                vars.iter().try_for_each(|v| check_variance(*v))
            }
            Self::Dirac(v) if v.is_finite() => Ok(()),
            Self::Dirac(v) => Err(Error::Domain(format!("non-finite dirac {v}"))),
            Self::Empirical(s) if s.is_empty() => Err(Error::Domain("empty sample list".into())),
            Self::Empirical(_) => Ok(()),
        }
    }
}

fn check_variance(var: f64) -> Result<()> {
    if var > 0.0 && var.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("variance must be positive, got {var}")))
    }
}

fn check_simplex(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("negative or non-finite probability".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::Domain(format!("probabilities sum to {s}")));
    }
    Ok(())
}

/// `Σ p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
///
/// A zero in `q` where `p` has mass is reported as [`Error::InfiniteDivergence`].
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Precondition(format!(
            "categorical length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_simplex(p)?;
    check_simplex(q)?;
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::InfiniteDivergence(format!("q[{i}] = 0 where p[{i}] = {pi}")));
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc.max(0.0))
}

/// KL divergence between two univariate Gaussians given by mean and variance.
pub fn kl_gaussian(mean_p: f64, var_p: f64, mean_q: f64, var_q: f64) -> Result<f64> {
    check_variance(var_p)?;
    check_variance(var_q)?;
    let d = mean_p - mean_q;
    let kl = 0.5 * (var_q / var_p).ln() + (var_p + d * d) / (2.0 * var_q) - 0.5;
    Ok(kl.max(0.0))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Biased (V-statistic) squared MMD under the RBF kernel `exp(-‖x-y‖² / 2σ²)`.
pub fn mmd2_rbf(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("MMD needs non-empty sample sets".into()));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Precondition(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let mean_kernel = |x: &[Vec<f64>], y: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for xi in x {
            for yj in y {
                s += (-gamma * sq_dist(xi, yj)).exp();
            }
        }
        s / (x.len() as f64 * y.len() as f64)
    };
    // cross term evaluated both ways so that swapping arguments is exact
    let cross = mean_kernel(a, b) + mean_kernel(b, a);
    let v = mean_kernel(a, a) + mean_kernel(b, b) - cross;
    Ok(v.max(0.0))
}

/// Median of pairwise Euclidean distances.
pub fn median_heuristic_bandwidth(samples: &[Vec<f64>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Precondition("median heuristic needs at least two samples".into()));
    }
    let mut d = Vec::with_capacity(samples.len() * (samples.len() - 1) / 2);
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            d.push(sq_dist(&samples[i], &samples[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if median > 0.0 {
        Ok(median)
    } else if d[n - 1] > 0.0 {
        // more than half the pairs coincide; fall back to the mean nonzero distance
        let nz: Vec<f64> = d.into_iter().filter(|x| *x > 0.0).collect();
        Ok(nz.iter().sum::<f64>() / nz.len() as f64)
    } else {
        Err(Error::DegenerateBandwidth)
    }
}

/// Kernel bandwidth selection for MMD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

/// Divergence backend used by the forgetting estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceKind {
    KlCategorical,
    KlGaussian,
    MmdRbf(Bandwidth),
}

impl DivergenceKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            DivergenceKind::MmdRbf(Bandwidth::Fixed(s)) if !(*s > 0.0) => {
                Err(Error::Precondition(format!("fixed bandwidth must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

/// Discrete atoms `(value, weight)` for Dirac and one-dimensional empirical laws.
fn atoms(d: &PredictiveDistribution) -> Option<Vec<(f64, f64)>> {
    let mut vals: Vec<f64> = match d {
        PredictiveDistribution::Dirac(v) => vec![*v],
        PredictiveDistribution::Empirical(s) if s.iter().all(|x| x.len() == 1) => {
            s.iter().map(|x| x[0]).collect()
        }
        _ => return None,
    };
    vals.sort_by(f64::total_cmp);
    let n = vals.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in vals {
        match out.last_mut() {
            Some((last, w)) if *last == v => *w += 1.0,
            _ => out.push((v, 1.0)),
        }
    }
    out.iter_mut().for_each(|(_, w)| *w /= n);
    Some(out)
}

fn kl_atoms(p: &[(f64, f64)], q: &[(f64, f64)]) -> Result<f64> {
    let mut acc = 0.0;
    for &(v, pw) in p {
        match q.iter().find(|(w, _)| *w == v) {
            Some(&(_, qw)) => acc += pw * (pw / qw).ln(),
            None => return Err(Error::InfiniteDivergence(format!("atom {v} missing from q"))),
        }
    }
    Ok(acc.max(0.0))
}

fn smooth(q: &[f64], eps: f64) -> Vec<f64> {
    let raw: Vec<f64> = q.iter().map(|x| x.max(eps)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn sample_set(d: &PredictiveDistribution) -> Option<Vec<Vec<f64>>> {
    match d {
        PredictiveDistribution::Empirical(s) => Some(s.clone()),
        PredictiveDistribution::Dirac(v) => Some(vec![vec![*v]]),
        _ => None,
    }
}

/// `D(p ‖ q)` for the configured backend.
///
/// `smoothing` floors categorical `q` probabilities before renormalising; with
/// `None`, support violations surface as [`Error::InfiniteDivergence`].
pub fn divergence(
    kind: DivergenceKind,
    p: &PredictiveDistribution,
    q: &PredictiveDistribution,
    smoothing: Option<f64>,
) -> Result<f64> {
    use PredictiveDistribution as P;
    match kind {
        DivergenceKind::KlCategorical => match (p, q) {
            (P::Categorical(a), P::Categorical(b)) => match smoothing {
                Some(eps) => kl_categorical(a, &smooth(b, eps)),
                None => kl_categorical(a, b),
            },
            _ => match (atoms(p), atoms(q)) {
                (Some(a), Some(b)) => kl_atoms(&a, &b),
                _ => Err(Error::Precondition(format!(
                    "categorical KL between {} and {}",
                    p.variant_name(),
                    q.variant_name()
                ))),
            },
        },
        DivergenceKind::KlGaussian => match (p, q) {
            (P::Gaussian { mean: mp, var: vp }, P::Gaussian { mean: mq, var: vq }) => {
                kl_gaussian(*mp, *vp, *mq, *vq)
            }
            (P::DiagGaussian { means: mp, vars: vp }, P::DiagGaussian { means: mq, vars: vq })
                if mp.len() == mq.len() =>
            {
                let mut acc = 0.0;
                for i in 0..mp.len() {
                    acc += kl_gaussian(mp[i], vp[i], mq[i], vq[i])?;
                }
                Ok(acc)
            }
            _ => Err(Error::Precondition(format!(
                "gaussian KL between {} and {}",
                p.variant_name(),
                q.variant_name()
            ))),
        },
        DivergenceKind::MmdRbf(bw) => {
            let (a, b) = match (sample_set(p), sample_set(q)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Precondition(format!(
                        "MMD between {} and {}",
                        p.variant_name(),
                        q.variant_name()
                    )))
                }
            };
            let sigma = match bw {
                Bandwidth::Fixed(s) => s,
                Bandwidth::Median => {
                    let head: Vec<Vec<f64>> = a.iter().take(1000).cloned().collect();
                    match median_heuristic_bandwidth(&head) {
                        Ok(s) => s,
                        Err(_) => {
                            let pooled: Vec<Vec<f64>> =
                                a.iter().chain(b.iter()).take(1000).cloned().collect();
                            median_heuristic_bandwidth(&pooled)?
                        }
                    }
                }
            };
            mmd2_rbf(&a, &b, sigma)
        }
    }
}

/// Draw one value.
pub fn sample(dist: &PredictiveDistribution, rng: &mut StreamRng) -> Value {
    match dist {
        PredictiveDistribution::Categorical(p) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last_nonzero = 0;
            for (i, pi) in p.iter().enumerate() {
                if *pi > 0.0 {
                    last_nonzero = i;
                }
                acc += pi;
                if u < acc && *pi > 0.0 {
                    return Value::Class(i);
                }
            }
            Value::Class(last_nonzero)
        }
        PredictiveDistribution::Gaussian { mean, var } => {
            let z: f64 = StandardNormal.sample(rng);
            Value::Real(mean + var.sqrt() * z)
        }
        PredictiveDistribution::DiagGaussian { means, vars } => Value::Vector(
            means
                .iter()
                .zip(vars)
                .map(|(m, v)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + v.sqrt() * z
                })
                .collect(),
        ),
        PredictiveDistribution::Dirac(v) => Value::Real(*v),
        PredictiveDistribution::Empirical(s) => Value::Vector(s[rng.random_range(0..s.len())].clone()),
    }
}

/// A learner whose regression prediction is a point estimate.
pub trait PointPredictor {
    type State;
    fn point_predict(&self, state: &Self::State, input: &[f64]) -> Result<f64>;
}

/// Mean squared residual on a held-out set, floored at [`VARIANCE_FLOOR`].
pub fn fit_residual_variance<P: PointPredictor>(
    learner: &P,
    state: &P::State,
    validation: &[(Vec<f64>, f64)],
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::Precondition("empty validation set".into()));
    }
    let mut acc = 0.0;
    for (x, y) in validation {
        let r = learner.point_predict(state, x)? - y;
        acc += r * r;
    }
    let v = acc / validation.len() as f64;
    if !v.is_finite() {
        return Err(Error::NumericalDivergence("non-finite residual variance".into()));
    }
    Ok(v.max(VARIANCE_FLOOR))
}

//! Single-hidden-layer tanh networks with closed-form gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Parameters laid out as `[W1 (hidden × input), b1, W2 (output × hidden), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub params: Vec<f64>,
}

/// Hidden activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn num_params(input_dim: usize, hidden_dim: usize, output_dim: usize) -> usize {
        hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        let n = Self::num_params(input_dim, hidden_dim, output_dim);
        Self { input_dim, hidden_dim, output_dim, params: vec![0.0; n] }
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) for weights and biases of each layer.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut StreamRng) -> Self {
        let mut net = Self::zeros(input_dim, hidden_dim, output_dim);
        let b1 = 1.0 / (input_dim.max(1) as f64).sqrt();
        let b2 = 1.0 / (hidden_dim.max(1) as f64).sqrt();
        let split = hidden_dim * input_dim + hidden_dim;
        for (i, p) in net.params.iter_mut().enumerate() {
            let b = if i < split { b1 } else { b2 };
            *p = rng.random_range(-b..=b);
        }
        net
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden_dim * self.input_dim;
        let b1 = w1 + self.hidden_dim;
        let w2 = b1 + self.output_dim * self.hidden_dim;
        (w1, b1, w2)
    }

    /// Forward pass into caller-provided buffers.
    pub fn forward_into(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let (o_b1, o_w2, o_b2) = self.offsets();
        let p = &self.params;
        let (i_dim, h_dim) = (self.input_dim, self.hidden_dim);
        for j in 0..h_dim {
            let row = &p[j * i_dim..(j + 1) * i_dim];
            let mut a = p[o_b1 + j];
            for (w, xi) in row.iter().zip(x) {
                a += w * xi;
            }
            hidden[j] = a.tanh();
        }
        for k in 0..self.output_dim {
            let row = &p[o_w2 + k * h_dim..o_w2 + (k + 1) * h_dim];
            let mut a = p[o_b2 + k];
            for (w, h) in row.iter().zip(hidden.iter()) {
                a += w * h;
            }
            out[k] = a;
        }
    }

    /// Network output and cached activations.
    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim {
            return Err(Error::Interface(format!("input of length {} for a {}-input network", x.len(), self.input_dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite network input".into()));
        }
        let mut hidden = vec![0.0; self.hidden_dim];
        let mut output = vec![0.0; self.output_dim];
        self.forward_into(x, &mut hidden, &mut output);
        Ok(ForwardCache { hidden, output })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Accumulate `∂(dout · f(x))/∂θ` into `grad`.
    pub fn backward_into(&self, x: &[f64], hidden: &[f64], dout: &[f64], grad: &mut [f64]) {
        let (o_b1, o_w2, o_b2) = self.offsets();
        let p = &self.params;
        let (i_dim, h_dim) = (self.input_dim, self.hidden_dim);
        for k in 0..self.output_dim {
            let d = dout[k];
            if d == 0.0 {
                continue;
            }
            grad[o_b2 + k] += d;
            let row = &mut grad[o_w2 + k * h_dim..o_w2 + (k + 1) * h_dim];
            for (g, h) in row.iter_mut().zip(hidden) {
                *g += d * h;
            }
        }
        for j in 0..h_dim {
            let mut dh = 0.0;
            for k in 0..self.output_dim {
                dh += dout[k] * p[o_w2 + k * h_dim + j];
            }
            let da = dh * (1.0 - hidden[j] * hidden[j]);
            grad[o_b1 + j] += da;
            let row = &mut grad[j * i_dim..(j + 1) * i_dim];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += da * xi;
            }
        }
    }

    /// Gradient of `dout · f(x)` with respect to the input.
    pub fn input_gradient(&self, hidden: &[f64], dout: &[f64]) -> Vec<f64> {
        let (_, o_w2, _) = self.offsets();
        let p = &self.params;
        let mut gx = vec![0.0; self.input_dim];
        for j in 0..self.hidden_dim {
            let mut dh = 0.0;
            for k in 0..self.output_dim {
                dh += dout[k] * p[o_w2 + k * self.hidden_dim + j];
            }
            let da = dh * (1.0 - hidden[j] * hidden[j]);
            for i in 0..self.input_dim {
                gx[i] += da * p[j * self.input_dim + i];
            }
        }
        gx
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Training loss family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Mean over batch and output components of `(f(x) − y)²`.
    SquaredError,
    /// Mean over the batch of `−log softmax(f(x))_y`.
    CrossEntropy,
}

/// Batch labels matching a [`LossKind`].
#[derive(Debug, Clone, Copy)]
pub enum Labels<'a> {
    Real(&'a [Vec<f64>]),
    Class(&'a [usize]),
}

/// Mean batch loss and its gradient with respect to the parameters.
pub fn mlp_gradient(net: &Mlp, inputs: &[Vec<f64>], labels: Labels<'_>) -> Result<(f64, Vec<f64>)> {
    let b = inputs.len();
    if b == 0 {
        return Err(Error::Precondition("empty batch".into()));
    }
    let n_labels = match labels {
        Labels::Real(y) => y.len(),
        Labels::Class(c) => c.len(),
    };
    if n_labels != b {
        return Err(Error::Precondition(format!("{b} inputs but {n_labels} labels")));
    }
    let mut grad = vec![0.0; net.params.len()];
    let mut hidden = vec![0.0; net.hidden_dim];
    let mut out = vec![0.0; net.output_dim];
    let mut dout = vec![0.0; net.output_dim];
    let mut loss = 0.0;
    for (n, x) in inputs.iter().enumerate() {
        if x.len() != net.input_dim {
            return Err(Error::Interface(format!("input of length {} for a {}-input network", x.len(), net.input_dim)));
        }
        net.forward_into(x, &mut hidden, &mut out);
        match labels {
            Labels::Real(ys) => {
                let y = &ys[n];
                let scale = 1.0 / (b * net.output_dim) as f64;
                for k in 0..net.output_dim {
                    let r = out[k] - y[k];
                    loss += r * r * scale;
                    dout[k] = 2.0 * r * scale;
                }
            }
            Labels::Class(cs) => {
                let c = cs[n];
                if c >= net.output_dim {
                    return Err(Error::Precondition(format!("class {c} with {} outputs", net.output_dim)));
                }
                let p = softmax(&out);
                loss -= p[c].max(f64::MIN_POSITIVE).ln() / b as f64;
                for k in 0..net.output_dim {
                    dout[k] = (p[k] - if k == c { 1.0 } else { 0.0 }) / b as f64;
                }
            }
        }
        net.backward_into(x, &hidden, &dout, &mut grad);
    }
    if !loss.is_finite() {
        return Err(Error::NumericalDivergence("non-finite training loss".into()));
    }
    Ok((loss, grad))
}

/// Mean batch loss without gradients.
pub fn mlp_loss(net: &Mlp, inputs: &[Vec<f64>], labels: Labels<'_>) -> Result<f64> {
    let mut hidden = vec![0.0; net.hidden_dim];
    let mut out = vec![0.0; net.output_dim];
    let b = inputs.len() as f64;
    let mut loss = 0.0;
    for (n, x) in inputs.iter().enumerate() {
        net.forward_into(x, &mut hidden, &mut out);
        match labels {
            Labels::Real(ys) => {
                for k in 0..net.output_dim {
                    let r = out[k] - ys[n][k];
                    loss += r * r / (b * net.output_dim as f64);
                }
            }
            Labels::Class(cs) => loss -= softmax(&out)[cs[n]].max(f64::MIN_POSITIVE).ln() / b,
        }
    }
    Ok(loss)
}

/// `v ← βv + g; θ ← θ − lr·v`.
pub fn sgd_momentum_step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Bias-corrected Adam; `step` is incremented before use.
pub fn adam_step(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    step: &mut u64,
    grad: &[f64],
    hp: AdamParams,
) {
    *step += 1;
    let t = *step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        params[i] -= hp.lr * mh / (vh.sqrt() + hp.eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    Adam(AdamParams),
}

/// Optimizer buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, step: u64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam(AdamParams::with_lr(lr))
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerConfig::Sgd { lr, momentum }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerConfig::Sgd { lr, momentum } => {
                if !(lr > 0.0) || !(0.0..1.0).contains(&momentum) {
                    return Err(Error::Precondition(format!("invalid SGD settings lr={lr} momentum={momentum}")));
                }
            }
            OptimizerConfig::Adam(hp) => {
                if !(hp.lr > 0.0) || !(0.0..1.0).contains(&hp.beta1) || !(0.0..1.0).contains(&hp.beta2) {
                    return Err(Error::Precondition(format!("invalid Adam settings {hp:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn init_state(&self, num_params: usize) -> OptimizerState {
        match self {
            OptimizerConfig::Sgd { .. } => OptimizerState::Sgd { velocity: vec![0.0; num_params] },
            OptimizerConfig::Adam(_) => {
                OptimizerState::Adam { m: vec![0.0; num_params], v: vec![0.0; num_params], step: 0 }
            }
        }
    }

    pub fn apply(&self, state: &mut OptimizerState, params: &mut [f64], grad: &[f64]) -> Result<()> {
        match (self, state) {
            (OptimizerConfig::Sgd { lr, momentum }, OptimizerState::Sgd { velocity }) => {
                sgd_momentum_step(params, velocity, grad, *lr, *momentum)
            }
            (OptimizerConfig::Adam(hp), OptimizerState::Adam { m, v, step }) => adam_step(params, m, v, step, grad, *hp),
            _ => return Err(Error::Precondition("optimizer state does not match its configuration".into())),
        }
        Ok(())
    }
}

impl OptimizerState {
    pub fn is_finite(&self) -> bool {
        match self {
            OptimizerState::Sgd { velocity } => velocity.iter().all(|v| v.is_finite()),
            OptimizerState::Adam { m, v, .. } => m.iter().chain(v).all(|x| x.is_finite()),
        }
    }
}

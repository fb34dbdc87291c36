//! Pose regression with learnable homoscedastic loss weights.
//!
//! ```text
//! L   = e^{−s_p} L_p + s_p + e^{−s_q} L_q + s_q
//! L_p = 1/(3N) Σ_i ‖p̂_i − p_i‖₁
//! L_q = 1/(4N) Σ_i ‖q̂_i/‖q̂_i‖ − q_i‖₁
//! ```
//!
//! A small fully connected network maps a feature vector to a raw 7-vector
//! `(p̂, q̂)`. The parameter vector is the network weights followed by
//! `s_p, s_q`. The L1 subgradient at zero is taken as zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_poses, normalize_quat, quat_norm, ErrorSummary, Pose};
use crate::param::ParamVector;

pub const POSE_OUTPUT_DIM: usize = 7;

/// Raw network output: position and an unnormalized quaternion.
pub type RawPose = ([f64; 3], [f64; 4]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub feature: Vec<f64>,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseLossParams {
    pub s_p: f64,
    pub s_q: f64,
}

impl Default for PoseLossParams {
    fn default() -> Self {
        Self { s_p: 0.0, s_q: -3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLossParts {
    pub l_p: f64,
    pub l_q: f64,
    pub total: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn pose_loss_parts(preds: &[RawPose], truth: &[Pose], params: PoseLossParams) -> Result<PoseLossParts> {
    if preds.is_empty() {
        return Err(Error::Empty("pose batch"));
    }
    if preds.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: truth.len(),
            actual: preds.len(),
        });
    }
    let n = preds.len() as f64;
    let mut sum_p = 0.0;
    let mut sum_q = 0.0;
    for ((p_hat, q_hat), gt) in preds.iter().zip(truth) {
        sum_p += p_hat.iter().zip(&gt.p).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let qn = normalize_quat(q_hat)?;
        sum_q += qn.iter().zip(&gt.q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    let l_p = sum_p / (3.0 * n);
    let l_q = sum_q / (4.0 * n);
    let total = (-params.s_p).exp() * l_p + params.s_p + (-params.s_q).exp() * l_q + params.s_q;
    Ok(PoseLossParts { l_p, l_q, total })
}

pub fn pose_loss(preds: &[RawPose], truth: &[Pose], params: PoseLossParams) -> Result<f64> {
    pose_loss_parts(preds, truth, params).map(|p| p.total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Fully connected network `input → hidden… → 7` with a linear output layer.
///
/// Parameter layout, per layer in order: weights row-major `(out × in)`, then
/// biases. `s_p` and `s_q` follow the last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyRegressor {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for TinyRegressor {
    fn default() -> Self {
        Self {
            input_dim: 16,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

struct Forward {
    /// `acts[0]` is the input; `acts[l+1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl TinyRegressor {
    pub fn new(input_dim: usize, hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        if input_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::Domain("layer widths must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden,
            activation,
        })
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend(&self.hidden);
        d.push(POSE_OUTPUT_DIM);
        d
    }

    pub fn n_weights(&self) -> usize {
        self.dims().windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn n_params(&self) -> usize {
        self.n_weights() + 2
    }

    pub fn loss_params(&self, x: &ParamVector) -> PoseLossParams {
        let n = self.n_weights();
        PoseLossParams { s_p: x[n], s_q: x[n + 1] }
    }

    /// Glorot-uniform weights, zero biases except the quaternion scalar bias at
    /// one, then `(s_p, s_q)`.
    pub fn init_params(&self, seed: u64, loss: PoseLossParams) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = self.dims();
        let mut out = Vec::with_capacity(self.n_params());
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            out.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
            let mut bias = vec![0.0; fan_out];
            if l == dims.len() - 2 {
                bias[3] = 1.0;
            }
            out.extend(bias);
        }
        out.push(loss.s_p);
        out.push(loss.s_q);
        ParamVector::new(out)
    }

    fn check_layout(&self, x: &ParamVector, feature: &[f64]) -> Result<()> {
        if x.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: self.n_params(),
                actual: x.len(),
            });
        }
        if feature.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim,
                actual: feature.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, w: &[f64], feature: &[f64]) -> Forward {
        let dims = self.dims();
        let n_layers = dims.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        acts.push(feature.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let weights = &w[offset..offset + n_in * n_out];
            let bias = &w[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    bias[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let a = if l + 1 == n_layers {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            acts.push(a);
        }
        Forward { acts, pre }
    }

    fn backward(&self, w: &[f64], fwd: &Forward, d_out: &[f64], grad: &mut [f64]) {
        let dims = self.dims();
        let n_layers = dims.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += dims[l] * dims[l + 1] + dims[l + 1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let off = offsets[l];
            let input = &fwd.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let weights = &w[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wt) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *p += d * wt;
                }
            }
            for (i, p) in prev.iter_mut().enumerate() {
                *p *= self.activation.derivative(fwd.pre[l - 1][i], fwd.acts[l][i]);
            }
            delta = prev;
        }
    }

    /// Raw `(p̂, q̂)` for one feature vector.
    pub fn predict_raw(&self, x: &ParamVector, feature: &[f64]) -> Result<RawPose> {
        self.check_layout(x, feature)?;
        let fwd = self.forward(&x.as_slice()[..self.n_weights()], feature);
        let o = fwd.acts.last().expect("output layer");
        Ok(([o[0], o[1], o[2]], [o[3], o[4], o[5], o[6]]))
    }

    pub fn predict(&self, x: &ParamVector, feature: &[f64]) -> Result<Pose> {
        let (p, q) = self.predict_raw(x, feature)?;
        Pose::new(p, q)
    }
}

/// Loss and exact gradient over `batch`, including `∂/∂s_p` and `∂/∂s_q`.
pub fn pose_loss_value_grad(x: &ParamVector, batch: &[&PoseSample], model: &TinyRegressor) -> Result<(PoseLossParts, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::Empty("pose batch"));
    }
    let n_w = model.n_weights();
    let params = model.loss_params(x);
    let (wp, wq) = ((-params.s_p).exp(), (-params.s_q).exp());
    let n = batch.len() as f64;
    let weights = &x.as_slice()[..n_w];
    let mut grad = vec![0.0; model.n_params()];
    let mut sum_p = 0.0;
    let mut sum_q = 0.0;
    for sample in batch {
        model.check_layout(x, &sample.feature)?;
        let fwd = model.forward(weights, &sample.feature);
        let o = fwd.acts.last().expect("output layer");
        let gt = &sample.pose;
        let mut d_out = [0.0; POSE_OUTPUT_DIM];
        for j in 0..3 {
            let r = o[j] - gt.p[j];
            sum_p += r.abs();
            d_out[j] = wp * sign(r) / (3.0 * n);
        }
        let q_raw = [o[3], o[4], o[5], o[6]];
        let norm = quat_norm(&q_raw);
        let qn = normalize_quat(&q_raw)?;
        let mut v = [0.0; 4];
        for j in 0..4 {
            let r = qn[j] - gt.q[j];
            sum_q += r.abs();
            v[j] = wq * sign(r) / (4.0 * n);
        }
        // d(q/‖q‖)/dq = (I − q̂ q̂ᵀ)/‖q‖
        let proj: f64 = qn.iter().zip(&v).map(|(a, b)| a * b).sum();
        for j in 0..4 {
            d_out[3 + j] = (v[j] - qn[j] * proj) / norm;
        }
        model.backward(weights, &fwd, &d_out, &mut grad[..n_w]);
    }
    let l_p = sum_p / (3.0 * n);
    let l_q = sum_q / (4.0 * n);
    grad[n_w] = 1.0 - wp * l_p;
    grad[n_w + 1] = 1.0 - wq * l_q;
    let total = wp * l_p + params.s_p + wq * l_q + params.s_q;
    Ok((PoseLossParts { l_p, l_q, total }, ParamVector::new(grad)))
}

pub fn pose_loss_grad(x: &ParamVector, batch: &[PoseSample], model: &TinyRegressor) -> Result<ParamVector> {
    let refs: Vec<&PoseSample> = batch.iter().collect();
    pose_loss_value_grad(x, &refs, model).map(|(_, g)| g)
}

/// The training objective over a fixed training set.
#[derive(Debug, Clone)]
pub struct PoseRegression {
    pub model: TinyRegressor,
    pub train: Vec<PoseSample>,
}

impl PoseRegression {
    pub fn new(model: TinyRegressor, train: Vec<PoseSample>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if let Some(s) = train.iter().find(|s| s.feature.len() != model.input_dim) {
            return Err(Error::ShapeMismatch {
                expected: model.input_dim,
                actual: s.feature.len(),
            });
        }
        Ok(Self { model, train })
    }

    pub fn loss_on(&self, x: &ParamVector, samples: &[PoseSample]) -> Result<PoseLossParts> {
        let preds = samples
            .iter()
            .map(|s| self.model.predict_raw(x, &s.feature))
            .collect::<Result<Vec<_>>>()?;
        let truth: Vec<Pose> = samples.iter().map(|s| s.pose).collect();
        pose_loss_parts(&preds, &truth, self.model.loss_params(x))
    }

    pub fn evaluate(&self, x: &ParamVector, samples: &[PoseSample]) -> Result<ErrorSummary> {
        let preds = samples
            .iter()
            .map(|s| self.model.predict(x, &s.feature))
            .collect::<Result<Vec<_>>>()?;
        let truth: Vec<Pose> = samples.iter().map(|s| s.pose).collect();
        evaluate_poses(&preds, &truth)
    }

    /// Smallest `|residual|` over all L1 terms; used to stay clear of kinks
    /// when finite-differencing.
    pub fn min_abs_residual(&self, x: &ParamVector, batch: &[usize]) -> Result<f64> {
        let mut min = f64::INFINITY;
        for &i in batch {
            let s = &self.train[i];
            let (p, q) = self.model.predict_raw(x, &s.feature)?;
            let qn = normalize_quat(&q)?;
            for (a, b) in p.iter().zip(&s.pose.p).chain(qn.iter().zip(&s.pose.q)) {
                min = min.min((a - b).abs());
            }
        }
        Ok(min)
    }
}

impl Objective for PoseRegression {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn value_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        let refs: Vec<&PoseSample> = self.train.iter().collect();
        pose_loss_value_grad(x, &refs, &self.model).map(|(p, g)| (p.total, g))
    }

    fn value(&self, x: &ParamVector) -> Result<f64> {
        self.loss_on(x, &self.train).map(|p| p.total)
    }

    fn n_samples(&self) -> usize {
        self.train.len()
    }

    fn batch_value_grad(&self, x: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        let refs: Vec<&PoseSample> = batch.iter().map(|&i| &self.train[i]).collect();
        pose_loss_value_grad(x, &refs, &self.model).map(|(p, g)| (p.total, g))
    }
}

//! Diagonal curvature estimators.
//!
//! Three estimates of the Gauss-Newton diagonal are provided:
//!
//! - [`simplified_hessian`]: `g ⊙ g` from the mini-batch gradient. This is what
//!   the OCP-LS step uses, including on the L1 pose loss where it is only an
//!   empirical curvature proxy.
//! - [`gnb_mse_estimate`]: the Gauss-Newton-Bartlett estimator for a squared
//!   error loss. Labels are resampled from the model's own predictive
//!   distribution `ŷ ~ N(ℓ(x), σ²)` and the mini-batch gradient against those
//!   labels is squared.
//! - [`exact_gn_diagonal`]: `diag(mean_n J_nᵀ J_n)` from explicit Jacobian rows,
//!   the oracle the sampled estimator is checked against.
//!
//! Normalization: the per-sample loss is `Ψ = ½(ℓ − y)²` and the mini-batch
//! loss is its mean, `𝒱 = (1/N) Σ ½(ℓ_n − ŷ_n)²`. With that convention
//! `E[N · ∇𝒱 ⊙ ∇𝒱] = (1/N) Σ_n J_n ⊙ J_n` when `σ = 1`, i.e. the sampled
//! estimate is unbiased for the diagonal of the mean Gauss-Newton matrix.
//! For `σ ≠ 1` the expectation picks up a factor `σ²`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSource {
    Simplified,
    GnbSampled,
    ExactOracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEstimate {
    pub diag: ParamVector,
    pub source: CurvatureSource,
}

/// A model producing one scalar prediction `ℓ_n(x)` per sample.
///
/// Samples are addressed by index into data the model owns.
pub trait ResidualModel {
    fn n_params(&self) -> usize;

    fn n_samples(&self) -> usize;

    fn predict(&self, x: &ParamVector, sample: usize) -> Result<f64>;

    /// Gradient of `ℓ_n` with respect to `x`. Only small oracle problems
    /// provide this.
    fn jacobian_row(&self, _x: &ParamVector, _sample: usize) -> Result<ParamVector> {
        Err(Error::Unsupported("jacobian_row"))
    }

    /// Vector-Jacobian product `Σ_n w_n ∇ℓ_n(x)` over `batch`.
    fn pullback(&self, x: &ParamVector, batch: &[usize], weights: &[f64]) -> Result<ParamVector> {
        let mut out = ParamVector::zeros(self.n_params());
        for (&n, &w) in batch.iter().zip(weights) {
            let row = self.jacobian_row(x, n)?;
            out = out.scale_add(w, &row)?;
        }
        Ok(out)
    }
}

/// `H = g ⊙ g`.
pub fn simplified_hessian(g: &ParamVector) -> Result<CurvatureEstimate> {
    g.validate("simplified_hessian")?;
    Ok(CurvatureEstimate {
        diag: g.map(|v| v * v),
        source: CurvatureSource::Simplified,
    })
}

/// Draws `ŷ_n = ℓ_n + σ z_n` with `z_n` standard normal, consuming exactly one
/// normal draw per prediction in order.
pub fn sample_synthetic_labels<R: Rng + ?Sized>(predictions: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    predictions
        .iter()
        .map(|&p| {
            let z: f64 = rng.sample(StandardNormal);
            p + sigma * z
        })
        .collect()
}

fn predictions<M: ResidualModel + ?Sized>(model: &M, x: &ParamVector, batch: &[usize]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if x.len() != model.n_params() {
        return Err(Error::ShapeMismatch {
            expected: model.n_params(),
            actual: x.len(),
        });
    }
    let preds = batch
        .iter()
        .map(|&n| model.predict(x, n))
        .collect::<Result<Vec<_>>>()?;
    if let Some(index) = preds.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            context: "model prediction",
            index,
        });
    }
    Ok(preds)
}

/// Mini-batch GNB estimate `N · ∇𝒱 ⊙ ∇𝒱` against caller-supplied labels.
pub fn gnb_mse_estimate_with_labels<M: ResidualModel + ?Sized>(
    model: &M,
    x: &ParamVector,
    batch: &[usize],
    labels: &[f64],
) -> Result<CurvatureEstimate> {
    let preds = predictions(model, x, batch)?;
    if labels.len() != preds.len() {
        return Err(Error::ShapeMismatch {
            expected: preds.len(),
            actual: labels.len(),
        });
    }
    let n = preds.len() as f64;
    let weights: Vec<f64> = preds.iter().zip(labels).map(|(p, y)| (p - y) / n).collect();
    let grad = model.pullback(x, batch, &weights)?;
    grad.validate("gnb gradient")?;
    Ok(CurvatureEstimate {
        diag: grad.map(|v| n * v * v),
        source: CurvatureSource::GnbSampled,
    })
}

/// Mini-batch GNB estimate with labels resampled from `N(ℓ(x), σ²)`.
pub fn gnb_mse_estimate<M: ResidualModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &ParamVector,
    batch: &[usize],
    sigma: f64,
    rng: &mut R,
) -> Result<CurvatureEstimate> {
    let preds = predictions(model, x, batch)?;
    let labels = sample_synthetic_labels(&preds, sigma, rng);
    gnb_mse_estimate_with_labels(model, x, batch, &labels)
}

/// Per-sample form `(1/N) Σ_n ∇Ψ_n ⊙ ∇Ψ_n` against caller-supplied labels.
/// Needs Jacobian rows.
pub fn gnb_per_sample_with_labels<M: ResidualModel + ?Sized>(
    model: &M,
    x: &ParamVector,
    batch: &[usize],
    labels: &[f64],
) -> Result<CurvatureEstimate> {
    let preds = predictions(model, x, batch)?;
    if labels.len() != preds.len() {
        return Err(Error::ShapeMismatch {
            expected: preds.len(),
            actual: labels.len(),
        });
    }
    let mut acc = ParamVector::zeros(model.n_params());
    for ((&n, p), y) in batch.iter().zip(&preds).zip(labels) {
        let r = p - y;
        let row = model.jacobian_row(x, n)?;
        acc = acc.zip_map(&row, |a, j| a + (r * j) * (r * j))?;
    }
    Ok(CurvatureEstimate {
        diag: acc.scaled(1.0 / preds.len() as f64),
        source: CurvatureSource::GnbSampled,
    })
}

pub fn gnb_per_sample_estimate<M: ResidualModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &ParamVector,
    batch: &[usize],
    sigma: f64,
    rng: &mut R,
) -> Result<CurvatureEstimate> {
    let preds = predictions(model, x, batch)?;
    let labels = sample_synthetic_labels(&preds, sigma, rng);
    gnb_per_sample_with_labels(model, x, batch, &labels)
}

/// `diag[i] = (1/N) Σ_n (∂ℓ_n/∂x_i)²`.
pub fn exact_gn_diagonal<M: ResidualModel + ?Sized>(
    model: &M,
    x: &ParamVector,
    batch: &[usize],
) -> Result<CurvatureEstimate> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut acc = ParamVector::zeros(model.n_params());
    for &n in batch {
        let row = model.jacobian_row(x, n)?;
        acc = acc.zip_map(&row, |a, j| a + j * j)?;
    }
    Ok(CurvatureEstimate {
        diag: acc.scaled(1.0 / batch.len() as f64),
        source: CurvatureSource::ExactOracle,
    })
}

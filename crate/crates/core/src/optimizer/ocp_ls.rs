//! OCP-LS: exponential moving averages of the gradient and of a clamped
//! diagonal curvature, bias correction, and a truncated geometric series of
//! the preconditioned operator applied to the corrected gradient.
//!
//! With `M = αI` and diagonal `Ĥ` the inner iteration
//!
//! ```text
//! φ_0 = M ĝ
//! φ_l = M ĝ + (I − M Ĥ) φ_{l−1}
//! ```
//!
//! sums to `φ_L = (I − (I − αĤ)^{L+1}) Ĥ⁻¹ ĝ`, coordinate by coordinate.
//! [`phi_closed_form`] evaluates that sum in O(d); [`phi_recursion`] runs the
//! loop literally and exists to cross-check it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamVector;

/// Margin keeping `r = 1 − αĤ` at or above `−1 + RATIO_MARGIN`.
pub const RATIO_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    #[default]
    ClosedForm,
    Recursion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpLsConfig {
    /// Scalar in `M = αI`; also the decay step size.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Decoupled weight decay coefficient.
    pub lambda: f64,
    /// Floor applied to each raw curvature entry before averaging.
    pub clamp_floor: f64,
    pub inner_mode: InnerMode,
    /// Cap on the inner iteration count; `None` runs all `k` iterations.
    pub inner_cap: Option<u32>,
}

impl Default for OcpLsConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            lambda: 0.0,
            clamp_floor: 1e-8,
            inner_mode: InnerMode::ClosedForm,
            inner_cap: Some(10),
        }
    }
}

impl OcpLsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be > 0, got {}", self.alpha)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.clamp_floor > 0.0 && self.clamp_floor.is_finite()) {
            return Err(Error::Domain(format!("clamp_floor must be > 0, got {}", self.clamp_floor)));
        }
        Ok(())
    }

    /// Number of inner iterations used at (1-based) step `k`.
    pub fn inner_iterations(&self, k: u64) -> u32 {
        let k = u32::try_from(k).unwrap_or(u32::MAX);
        match self.inner_cap {
            Some(cap) => k.min(cap),
            None => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub g_ema: ParamVector,
    pub h_ema: ParamVector,
    /// Completed steps. Zero before the first step.
    pub k: u64,
    /// Coordinates on which the ratio clamp bound, summed over steps.
    pub clamp_hits: u64,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        Self {
            g_ema: ParamVector::zeros(dim),
            h_ema: ParamVector::zeros(dim),
            k: 0,
            clamp_hits: 0,
        }
    }
}

/// One EMA update of both moments; increments `k`.
pub fn ema_update(
    state: &OptimizerState,
    g: &ParamVector,
    h_clamped: &ParamVector,
    cfg: &OcpLsConfig,
) -> Result<OptimizerState> {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    Ok(OptimizerState {
        g_ema: state.g_ema.zip_map(g, |m, gi| b1 * m + (1.0 - b1) * gi)?,
        h_ema: state.h_ema.zip_map(h_clamped, |m, hi| b2 * m + (1.0 - b2) * hi)?,
        k: state.k + 1,
        clamp_hits: state.clamp_hits,
    })
}

/// `1 − β^k`, accurate for β close to 1.
pub(crate) fn bias_factor(beta: f64, k: u64) -> f64 {
    if beta == 0.0 {
        return 1.0;
    }
    -(k as f64 * beta.ln()).exp_m1()
}

/// Returns `(ĝ, Ĥ)`. Requires at least one completed EMA update.
pub fn bias_correct(state: &OptimizerState, cfg: &OcpLsConfig) -> Result<(ParamVector, ParamVector)> {
    if state.k == 0 {
        return Err(Error::Contract("bias correction needs k >= 1".into()));
    }
    let c1 = bias_factor(cfg.beta1, state.k);
    let c2 = bias_factor(cfg.beta2, state.k);
    Ok((state.g_ema.map(|m| m / c1), state.h_ema.map(|h| h / c2)))
}

pub fn clamp_curvature(h: &ParamVector, floor: f64) -> ParamVector {
    h.map(|v| v.max(floor))
}

/// Literal inner loop; returns `φ_L`.
pub fn phi_recursion(g_hat: &ParamVector, h_hat: &ParamVector, cfg: &OcpLsConfig, iterations: u32) -> Result<ParamVector> {
    g_hat.check_len(h_hat)?;
    let alpha = cfg.alpha;
    let base = g_hat.scaled(alpha);
    let contraction = h_hat.map(|h| 1.0 - alpha * h);
    let mut phi = base.clone();
    for _ in 0..iterations {
        for ((p, &m), &r) in phi.as_mut_slice().iter_mut().zip(base.iter()).zip(contraction.iter()) {
            *p = m + r * *p;
        }
    }
    phi.validate("phi_recursion")?;
    Ok(phi)
}

/// `Σ_{l<n} (1 − a)^l`, evaluated without cancellation for `a ∈ [0, 2)`.
fn series_sum(a: f64, n: u32) -> f64 {
    if a == 0.0 {
        return n as f64;
    }
    let n_f = n as f64;
    if a <= 1.0 {
        // 1 − (1 − a)^n
        -(n_f * (-a).ln_1p()).exp_m1() / a
    } else {
        // r = −(1 − ε), ε = 2 − a
        let eps = 2.0 - a;
        let log_abs = (-eps).ln_1p();
        if n % 2 == 0 {
            -(n_f * log_abs).exp_m1() / a
        } else {
            (1.0 + (n_f * log_abs).exp()) / a
        }
    }
}

/// Closed-form `φ_L` plus the number of coordinates where the ratio clamp bound.
pub fn phi_closed_form_counted(
    g_hat: &ParamVector,
    h_hat: &ParamVector,
    cfg: &OcpLsConfig,
    iterations: u32,
) -> Result<(ParamVector, u64)> {
    g_hat.check_len(h_hat)?;
    let alpha = cfg.alpha;
    let terms = iterations.saturating_add(1);
    let upper = 2.0 - RATIO_MARGIN;
    let mut hits = 0u64;
    let phi = g_hat.zip_map(h_hat, |g, h| {
        let mut a = (alpha * h).max(0.0);
        if a > upper {
            a = upper;
            hits += 1;
        }
        alpha * g * series_sum(a, terms)
    })?;
    Ok((phi, hits))
}

/// `φ_L[i] = (1 − r_i^{L+1}) ĝ_i / Ĥ_i` with `r_i = 1 − αĤ_i` kept at or above `−1 + δ`.
pub fn phi_closed_form(g_hat: &ParamVector, h_hat: &ParamVector, cfg: &OcpLsConfig, iterations: u32) -> Result<ParamVector> {
    phi_closed_form_counted(g_hat, h_hat, cfg, iterations).map(|(phi, _)| phi)
}

/// Everything one step produces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x: ParamVector,
    pub state: OptimizerState,
    pub g_hat: ParamVector,
    pub h_hat: ParamVector,
    pub phi: ParamVector,
}

/// One OCP-LS step with the `g ⊙ g` curvature.
pub fn step(state: &OptimizerState, x: &ParamVector, g: &ParamVector, cfg: &OcpLsConfig) -> Result<(ParamVector, OptimizerState)> {
    let h = g.hadamard(g)?;
    step_with_curvature(state, x, g, &h, cfg).map(|out| (out.x, out.state))
}

/// One OCP-LS step with a caller-supplied raw curvature diagonal.
pub fn step_with_curvature(
    state: &OptimizerState,
    x: &ParamVector,
    g: &ParamVector,
    h_raw: &ParamVector,
    cfg: &OcpLsConfig,
) -> Result<StepOutput> {
    x.check_len(g)?;
    x.check_len(&state.g_ema)?;
    g.validate("gradient")?;
    let h_clamped = clamp_curvature(h_raw, cfg.clamp_floor);
    let mut next = ema_update(state, g, &h_clamped, cfg)?;
    let (g_hat, h_hat) = bias_correct(&next, cfg)?;
    let iterations = cfg.inner_iterations(next.k);
    let phi = match cfg.inner_mode {
        InnerMode::ClosedForm => {
            let (phi, hits) = phi_closed_form_counted(&g_hat, &h_hat, cfg, iterations)?;
            next.clamp_hits += hits;
            phi
        }
        InnerMode::Recursion => phi_recursion(&g_hat, &h_hat, cfg, iterations)?,
    };
    let decay = 1.0 - cfg.alpha * cfg.lambda;
    let x_next = x.zip_map(&phi, |xi, p| xi * decay - p)?;
    x_next.validate("ocp-ls iterate")?;
    Ok(StepOutput {
        x: x_next,
        state: next,
        g_hat,
        h_hat,
        phi,
    })
}

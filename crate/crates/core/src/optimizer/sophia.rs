//! Sophia-style baseline: EMA gradient divided by an EMA of `g ⊙ g`, with the
//! per-coordinate ratio clipped to `[−ρ, ρ]`.

use serde::{Deserialize, Serialize};

use super::ocp_ls::bias_factor;
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SophiaConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Clip bound on `ĝ / max(Ĥ, eps)`.
    pub rho: f64,
    pub weight_decay: f64,
}

impl Default for SophiaConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.965,
            beta2: 0.99,
            eps: 1e-8,
            rho: 1.0,
            weight_decay: 0.0,
        }
    }
}

impl SophiaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Domain("sophia: need lr > 0 and betas in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || !(self.rho > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Domain("sophia: need eps > 0, rho > 0, weight_decay >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SophiaState {
    pub m: ParamVector,
    pub h: ParamVector,
    pub k: u64,
    /// Coordinates whose ratio was clipped, summed over steps.
    pub clip_hits: u64,
}

impl SophiaState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: ParamVector::zeros(dim),
            h: ParamVector::zeros(dim),
            k: 0,
            clip_hits: 0,
        }
    }
}

pub fn sophia_step(state: &SophiaState, x: &ParamVector, g: &ParamVector, cfg: &SophiaConfig) -> Result<(ParamVector, SophiaState)> {
    x.check_len(g)?;
    x.check_len(&state.m)?;
    g.validate("gradient")?;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let m = state.m.zip_map(g, |m, gi| b1 * m + (1.0 - b1) * gi)?;
    let h = state.h.zip_map(g, |h, gi| b2 * h + (1.0 - b2) * gi * gi)?;
    let k = state.k + 1;
    let (c1, c2) = (bias_factor(b1, k), bias_factor(b2, k));
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    let mut clip_hits = state.clip_hits;
    let mut x_next = x.scaled(decay);
    for i in 0..x.len() {
        let ratio = (m[i] / c1) / (h[i] / c2).max(cfg.eps);
        if ratio.abs() > cfg.rho {
            clip_hits += 1;
        }
        x_next[i] -= cfg.lr * ratio.clamp(-cfg.rho, cfg.rho);
    }
    x_next.validate("sophia iterate")?;
    Ok((x_next, SophiaState { m, h, k, clip_hits }))
}

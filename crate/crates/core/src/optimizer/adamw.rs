//! AdamW baseline: adaptive moments with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::ocp_ls::bias_factor;
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Domain("adamw: need lr > 0 and betas in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Domain("adamw: need eps > 0 and weight_decay >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: ParamVector,
    pub v: ParamVector,
    pub k: u64,
}

impl AdamWState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: ParamVector::zeros(dim),
            v: ParamVector::zeros(dim),
            k: 0,
        }
    }
}

pub fn adamw_step(state: &AdamWState, x: &ParamVector, g: &ParamVector, cfg: &AdamWConfig) -> Result<(ParamVector, AdamWState)> {
    x.check_len(g)?;
    x.check_len(&state.m)?;
    g.validate("gradient")?;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let m = state.m.zip_map(g, |m, gi| b1 * m + (1.0 - b1) * gi)?;
    let v = state.v.zip_map(g, |v, gi| b2 * v + (1.0 - b2) * gi * gi)?;
    let k = state.k + 1;
    let (c1, c2) = (bias_factor(b1, k), bias_factor(b2, k));
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    let mut x_next = x.scaled(decay);
    for i in 0..x.len() {
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        x_next[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    x_next.validate("adamw iterate")?;
    Ok((x_next, AdamWState { m, v, k }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let x = ParamVector::new(vec![1.0, -4.0]);
        let (x1, s1) = adamw_step(&AdamWState::new(2), &x, &ParamVector::zeros(2), &AdamWConfig::default()).unwrap();
        assert_eq!(x1, x);
        assert_eq!(s1.k, 1);
    }

    #[test]
    fn constant_gradient_moments_are_exact() {
        let cfg = AdamWConfig::default();
        let g = ParamVector::new(vec![0.4, -2.0]);
        let mut state = AdamWState::new(2);
        let mut x = ParamVector::zeros(2);
        for _ in 0..50 {
            (x, state) = adamw_step(&state, &x, &g, &cfg).unwrap();
            let c1 = bias_factor(cfg.beta1, state.k);
            for i in 0..2 {
                assert!(((state.m[i] / c1) - g[i]).abs() <= 1e-14 * g[i].abs());
            }
        }
    }

    #[test]
    fn scalar_first_step() {
        // m̂ = g, v̂ = g², step = lr·g/(|g| + eps).
        let cfg = AdamWConfig {
            lr: 0.1,
            beta1: 0.8,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.5,
        };
        let (x1, _) = adamw_step(&AdamWState::new(1), &ParamVector::new(vec![2.0]), &ParamVector::new(vec![3.0]), &cfg).unwrap();
        let expected = 2.0 * (1.0 - 0.05) - 0.1 * 3.0 / (3.0 + 1e-8);
        assert!((x1[0] - expected).abs() < 1e-14);
    }
}

//! Empirical checks of the linear-convergence analysis.
//!
//! The analysis bounds one step by the descent lemma with smoothness `β`, a
//! curvature floor `α` (`[H_k]_ii ≥ α`) and the PL constant `μ`, giving the
//! contraction factor
//!
//! ```text
//! ρ(η) = 1 − (2μαη − μβη²) / (αβ),   ρ∞ = ρ(1) = 1 − (2μα − μβ) / (αβ)
//! ```
//!
//! valid when `β < 2α` and `μ ≤ αβ / (2α − β)`. This module evaluates those
//! formulas, audits the step-size condition on the diagonal curvature, estimates
//! `β` and `μ` from samples, and fits the observed decay rate of a trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamVector;
use crate::problems::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub beta_est: f64,
    pub mu_pl_est: f64,
    pub rho_pred: f64,
    pub rho_fit: f64,
    pub fit_r2: f64,
    pub a3_violation_count: u64,
}

/// Checks `α, β, μ > 0`, `β < 2α` and `μ ≤ αβ/(2α − β)`.
pub fn check_rate_preconditions(alpha: f64, beta: f64, mu: f64) -> Result<()> {
    if !(alpha > 0.0 && beta > 0.0 && mu > 0.0) {
        return Err(Error::Domain(format!(
            "need alpha, beta, mu > 0 (got {alpha}, {beta}, {mu})"
        )));
    }
    if !(beta < 2.0 * alpha) {
        return Err(Error::Domain(format!("violated beta < 2*alpha ({beta} >= {})", 2.0 * alpha)));
    }
    let mu_max = alpha * beta / (2.0 * alpha - beta);
    if !(mu <= mu_max) {
        return Err(Error::Domain(format!(
            "violated mu <= alpha*beta/(2*alpha - beta) ({mu} > {mu_max})"
        )));
    }
    Ok(())
}

/// Contraction factor for a step of relative length `eta`.
pub fn rho_at(alpha: f64, beta: f64, mu: f64, eta: f64) -> Result<f64> {
    check_rate_preconditions(alpha, beta, mu)?;
    Ok(1.0 - (2.0 * mu * alpha * eta - mu * beta * eta * eta) / (alpha * beta))
}

/// `ρ∞ = 1 − (2μα − μβ)/(αβ)`, in `[0, 1)` whenever the preconditions hold.
pub fn rho_infinity(alpha: f64, beta: f64, mu: f64) -> Result<f64> {
    // Rounding at the μ boundary can leave a value a few ulps below zero.
    rho_at(alpha, beta, mu, 1.0).map(|r| r.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A3Check {
    pub holds: bool,
    pub worst_index: usize,
    /// `|1 − αĤ_i|^{k+1}` at the worst coordinate.
    pub worst_value: f64,
}

/// Evaluates `|1 − αĤ_i|^{k+1} < 1` for every coordinate.
pub fn check_a3(h_hat: &ParamVector, alpha: f64, k: u64) -> A3Check {
    let mut worst_index = 0;
    let mut worst_abs = f64::NEG_INFINITY;
    for (i, &h) in h_hat.iter().enumerate() {
        let r = (1.0 - alpha * h).abs();
        if r > worst_abs || r.is_nan() {
            worst_abs = if r.is_nan() { f64::INFINITY } else { r };
            worst_index = i;
        }
    }
    if h_hat.is_empty() {
        return A3Check {
            holds: true,
            worst_index: 0,
            worst_value: 0.0,
        };
    }
    let worst_value = worst_abs.powf(k as f64 + 1.0);
    A3Check {
        holds: worst_abs < 1.0,
        worst_index,
        worst_value,
    }
}

/// Running maximum of `‖∇f(y) − ∇f(x)‖ / ‖y − x‖` over sampled pairs.
///
/// Pair `j` draws `x = center + radius·z`; its direction is the `j`-th
/// coordinate axis for `j < d` and a random Gaussian direction afterwards,
/// and `y = x + radius·dir/‖dir‖`. Every pair consumes the random stream in
/// order, so a larger `n_pairs` extends the same sequence.
pub fn estimate_beta(problem: &dyn Objective, center: &ParamVector, radius: f64, n_pairs: usize, seed: u64) -> Result<f64> {
    let d = problem.dim();
    if center.len() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            actual: center.len(),
        });
    }
    if n_pairs == 0 {
        return Err(Error::Empty("n_pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for j in 0..n_pairs {
        let x = ParamVector::new(
            center
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + radius * z
                })
                .collect(),
        );
        let mut dir = if j < d {
            let mut e = ParamVector::zeros(d);
            e[j] = 1.0;
            e
        } else {
            ParamVector::new((0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        };
        let n = dir.norm();
        if n == 0.0 {
            continue;
        }
        dir = dir.scaled(radius / n);
        let y = x.scale_add(1.0, &dir)?;
        let (_, gx) = problem.value_grad(&x)?;
        let (_, gy) = problem.value_grad(&y)?;
        let ratio = gy.scale_add(-1.0, &gx)?.norm() / dir.norm();
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    Ok(best)
}

/// Minimum of `½‖g‖² / gap` over `(gap, ‖g‖²)` pairs, ignoring gaps below 1e-12.
pub fn mu_pl_from_samples(samples: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    samples
        .into_iter()
        .filter(|(gap, _)| *gap >= 1e-12)
        .map(|(gap, g2)| 0.5 * g2 / gap)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .ok_or(Error::Empty("trajectory points with a positive optimality gap"))
}

/// PL constant estimate along a trajectory, given the optimal value `f_star`.
pub fn estimate_mu_pl(problem: &dyn Objective, trajectory: &[ParamVector], f_star: f64) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let samples = trajectory
        .iter()
        .map(|x| problem.value_grad(x).map(|(f, g)| (f - f_star, g.norm_sq())))
        .collect::<Result<Vec<_>>>()?;
    mu_pl_from_samples(samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rho: f64,
    pub r2: f64,
}

/// Least-squares fit of `ln(gap_k)` against `k` over the final half.
pub fn fit_empirical_rate(gaps: &[f64]) -> Result<RateFit> {
    if gaps.len() < 10 {
        return Err(Error::Domain(format!("need at least 10 gaps, got {}", gaps.len())));
    }
    if let Some(index) = gaps.iter().position(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::Domain(format!("gap {index} is not positive and finite: {}", gaps[index])));
    }
    let start = gaps.len() / 2;
    let pts: Vec<(f64, f64)> = gaps[start..]
        .iter()
        .enumerate()
        .map(|(i, g)| ((start + i) as f64, g.ln()))
        .collect();
    let n = pts.len() as f64;
    let mean_k = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_k).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_k) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - mean_y - slope * (p.0 - mean_k)).powi(2))
        .sum();
    let r2 = if ss_tot <= f64::EPSILON * n * mean_y.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit { rho: slope.exp(), r2 })
}

/// Number of steps where `values[k+1] > values[k]` beyond a relative slack.
pub fn monotonicity_violations(values: &[f64], rel_slack: f64) -> usize {
    values
        .windows(2)
        .filter(|w| w[1] > w[0] + rel_slack * w[0].abs())
        .count()
}

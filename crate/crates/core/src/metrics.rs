//! Pose evaluation metrics: Euclidean position error, quaternion geodesic
//! rotation error, and the median/mean summary reported per run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera pose: position in meters and a unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub p: [f64; 3],
    pub q: [f64; 4],
}

impl Pose {
    /// Normalizes `q`; fails on a zero or non-finite quaternion.
    pub fn new(p: [f64; 3], q: [f64; 4]) -> Result<Self> {
        Ok(Self { p, q: normalize_quat(&q)? })
    }
}

pub fn quat_norm(q: &[f64; 4]) -> f64 {
    q.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn normalize_quat(q: &[f64; 4]) -> Result<[f64; 4]> {
    let n = quat_norm(q);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain(format!("quaternion norm {n} cannot be normalized")));
    }
    Ok([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
}

/// Euclidean distance in meters.
pub fn position_error(p_hat: &[f64; 3], p: &[f64; 3]) -> f64 {
    let d = [p_hat[0] - p[0], p_hat[1] - p[1], p_hat[2] - p[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `2·arccos(|q̂/‖q̂‖ · q|)` in degrees. `q` is taken as already unit.
pub fn rotation_error(q_hat: &[f64; 4], q: &[f64; 4]) -> Result<f64> {
    let qn = normalize_quat(q_hat)?;
    let dot: f64 = qn.iter().zip(q).map(|(a, b)| a * b).sum();
    Ok((2.0 * dot.abs().clamp(0.0, 1.0).acos()).to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub median_pos: f64,
    pub mean_pos: f64,
    pub median_rot: f64,
    pub mean_rot: f64,
}

impl ErrorSummary {
    pub fn nan() -> Self {
        Self {
            median_pos: f64::NAN,
            mean_pos: f64::NAN,
            median_rot: f64::NAN,
            mean_rot: f64::NAN,
        }
    }
}

/// Median with the even-length midpoint convention.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("mean"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn summarize(errors_pos: &[f64], errors_rot: &[f64]) -> Result<ErrorSummary> {
    if errors_pos.len() != errors_rot.len() {
        return Err(Error::ShapeMismatch {
            expected: errors_pos.len(),
            actual: errors_rot.len(),
        });
    }
    Ok(ErrorSummary {
        median_pos: median(errors_pos)?,
        mean_pos: mean(errors_pos)?,
        median_rot: median(errors_rot)?,
        mean_rot: mean(errors_rot)?,
    })
}

/// Summary over paired predictions and ground truth.
pub fn evaluate_poses(predicted: &[Pose], truth: &[Pose]) -> Result<ErrorSummary> {
    if predicted.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let pos: Vec<f64> = predicted.iter().zip(truth).map(|(a, b)| position_error(&a.p, &b.p)).collect();
    let rot = predicted
        .iter()
        .zip(truth)
        .map(|(a, b)| rotation_error(&a.q, &b.q))
        .collect::<Result<Vec<_>>>()?;
    summarize(&pos, &rot)
}

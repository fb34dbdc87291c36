//! Central finite differences for checking analytic gradients.

use crate::error::Result;
use crate::param::ParamVector;

/// `(f(x + h e_i) − f(x − h e_i)) / 2h` for the listed coordinates.
pub fn central_difference<F>(f: F, x: &ParamVector, h: f64, coords: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    let mut probe = x.clone();
    coords
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe)?;
            probe[i] = orig - h;
            let down = f(&probe)?;
            probe[i] = orig;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_index: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Per-coordinate `|a − n| / max(|a|, |n|, floor)`, worst case over `coords`.
pub fn compare(analytic: &ParamVector, numeric: &[f64], coords: &[usize], floor: f64) -> GradCheck {
    let mut worst = GradCheck {
        max_rel_err: 0.0,
        worst_index: coords.first().copied().unwrap_or(0),
    };
    for (&i, &n) in coords.iter().zip(numeric) {
        let a = analytic[i];
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if rel > worst.max_rel_err || rel.is_nan() {
            worst = GradCheck {
                max_rel_err: if rel.is_nan() { f64::INFINITY } else { rel },
                worst_index: i,
            };
        }
    }
    worst
}

/// Checks every coordinate of `x`.
pub fn check_gradient<F>(f: F, analytic: &ParamVector, x: &ParamVector, h: f64, floor: f64) -> Result<GradCheck>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    let numeric = central_difference(f, x, h, &coords)?;
    Ok(compare(analytic, &numeric, &coords, floor))
}

//! Linear least squares `(1/N) Σ ½ (a_nᵀx − y_n)²`, the target for the GNB
//! oracle tests: its Jacobian rows are the design rows themselves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Objective;
use crate::curvature::ResidualModel;
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone)]
pub struct LinearLeastSquares {
    rows: Vec<ParamVector>,
    targets: Vec<f64>,
}

impl LinearLeastSquares {
    pub fn new(rows: Vec<ParamVector>, targets: Vec<f64>) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("design rows"))?;
        if rows.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                expected: rows.len(),
                actual: targets.len(),
            });
        }
        for r in &rows {
            first.check_len(r)?;
            r.validate("design row")?;
        }
        Ok(Self { rows, targets })
    }

    /// Gaussian design and targets.
    pub fn random(n_samples: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let rows = (0..n_samples)
            .map(|_| ParamVector::new((0..dim).map(|_| normal()).collect()))
            .collect();
        let targets = (0..n_samples).map(|_| normal()).collect();
        Self::new(rows, targets)
    }

    pub fn rows(&self) -> &[ParamVector] {
        &self.rows
    }

    fn batch_eval(&self, x: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n = batch.len() as f64;
        let mut f = 0.0;
        let mut g = ParamVector::zeros(self.dim());
        for &i in batch {
            let r = self.rows[i].dot(x)? - self.targets[i];
            f += 0.5 * r * r / n;
            g = g.scale_add(r / n, &self.rows[i])?;
        }
        Ok((f, g))
    }
}

impl ResidualModel for LinearLeastSquares {
    fn n_params(&self) -> usize {
        self.rows[0].len()
    }

    fn n_samples(&self) -> usize {
        self.rows.len()
    }

    fn predict(&self, x: &ParamVector, sample: usize) -> Result<f64> {
        self.rows[sample].dot(x)
    }

    fn jacobian_row(&self, _x: &ParamVector, sample: usize) -> Result<ParamVector> {
        Ok(self.rows[sample].clone())
    }
}

impl Objective for LinearLeastSquares {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn value_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        let all: Vec<usize> = (0..self.rows.len()).collect();
        self.batch_eval(x, &all)
    }

    fn n_samples(&self) -> usize {
        self.rows.len()
    }

    fn batch_value_grad(&self, x: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        self.batch_eval(x, batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use rand::Rng;

    #[test]
    fn finite_difference_agreement() {
        let prob = LinearLeastSquares::random(12, 5, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = ParamVector::new((0..5).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let (_, g) = prob.value_grad(&x).unwrap();
            let report = check_gradient(|p| prob.value(p), &g, &x, 1e-6, 1e-3).unwrap();
            assert!(report.passes(1e-5), "{report:?}");
        }
    }

    #[test]
    fn pullback_matches_batch_gradient() {
        let prob = LinearLeastSquares::random(6, 3, 1).unwrap();
        let x = ParamVector::new(vec![0.1, -0.4, 0.9]);
        let batch = [0, 2, 5];
        let weights: Vec<f64> = batch
            .iter()
            .map(|&i| (prob.predict(&x, i).unwrap() - prob.targets[i]) / 3.0)
            .collect();
        let via_pullback = prob.pullback(&x, &batch, &weights).unwrap();
        let (_, g) = prob.batch_value_grad(&x, &batch).unwrap();
        for i in 0..3 {
            assert!((via_pullback[i] - g[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_ragged_rows() {
        let rows = vec![ParamVector::zeros(2), ParamVector::zeros(3)];
        assert!(LinearLeastSquares::new(rows, vec![0.0, 0.0]).is_err());
        assert!(LinearLeastSquares::new(vec![], vec![]).is_err());
    }
}

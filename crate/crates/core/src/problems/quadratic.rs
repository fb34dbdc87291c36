//! `f(x) = ½ xᵀAx − bᵀx + (λ/2)‖x‖²` with `A = Vᵀ diag(e) V`.
//!
//! The eigen-decomposition is fixed at construction, so the smoothness
//! constant `max(e) + λ`, the PL constant `min(e) + λ`, the minimizer and the
//! optimal value are all exact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Objective;
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    eigenvalues: Vec<f64>,
    /// Orthonormal rows `V`; `None` means `A` is diagonal.
    basis: Option<Vec<Vec<f64>>>,
    b: ParamVector,
    lambda_reg: f64,
    x_star: ParamVector,
    f_star: f64,
}

impl QuadraticProblem {
    /// Diagonal `A = diag(eigenvalues)`.
    pub fn diagonal(eigenvalues: Vec<f64>, b: ParamVector, lambda_reg: f64) -> Result<Self> {
        Self::build(eigenvalues, None, b, lambda_reg)
    }

    /// `A = Vᵀ diag(eigenvalues) V` with `V` a seeded random rotation.
    pub fn rotated(eigenvalues: Vec<f64>, b: ParamVector, lambda_reg: f64, seed: u64) -> Result<Self> {
        let basis = random_orthonormal(eigenvalues.len(), seed);
        Self::build(eigenvalues, Some(basis), b, lambda_reg)
    }

    /// Eigenvalues spread geometrically over `[lo, hi]`.
    pub fn with_spectrum(dim: usize, lo: f64, hi: f64, lambda_reg: f64, rotate_seed: Option<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("quadratic dimension"));
        }
        let eigs: Vec<f64> = (0..dim)
            .map(|i| {
                if dim == 1 {
                    lo
                } else {
                    lo * (hi / lo).powf(i as f64 / (dim - 1) as f64)
                }
            })
            .collect();
        let b = ParamVector::zeros(dim);
        match rotate_seed {
            Some(seed) => Self::rotated(eigs, b, lambda_reg, seed),
            None => Self::diagonal(eigs, b, lambda_reg),
        }
    }

    fn build(eigenvalues: Vec<f64>, basis: Option<Vec<Vec<f64>>>, b: ParamVector, lambda_reg: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Empty("quadratic dimension"));
        }
        if eigenvalues.len() != b.len() {
            return Err(Error::ShapeMismatch {
                expected: eigenvalues.len(),
                actual: b.len(),
            });
        }
        if eigenvalues.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Domain("quadratic eigenvalues must be positive and finite".into()));
        }
        if !(lambda_reg >= 0.0) {
            return Err(Error::Domain(format!("lambda_reg must be >= 0, got {lambda_reg}")));
        }
        b.validate("quadratic b")?;
        let mut prob = Self {
            eigenvalues,
            basis,
            b,
            lambda_reg,
            x_star: ParamVector::default(),
            f_star: 0.0,
        };
        let rotated_b = prob.to_eigen(&prob.b);
        let scaled: Vec<f64> = rotated_b
            .iter()
            .zip(&prob.eigenvalues)
            .map(|(bi, e)| bi / (e + lambda_reg))
            .collect();
        prob.x_star = prob.from_eigen(&scaled);
        prob.f_star = -0.5 * prob.b.dot(&prob.x_star)?;
        Ok(prob)
    }

    fn to_eigen(&self, x: &ParamVector) -> Vec<f64> {
        match &self.basis {
            None => x.as_slice().to_vec(),
            Some(v) => v.iter().map(|row| row.iter().zip(x.iter()).map(|(a, b)| a * b).sum()).collect(),
        }
    }

    fn from_eigen(&self, y: &[f64]) -> ParamVector {
        match &self.basis {
            None => ParamVector::new(y.to_vec()),
            Some(v) => {
                let mut out = vec![0.0; y.len()];
                for (row, &yk) in v.iter().zip(y) {
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += r * yk;
                    }
                }
                ParamVector::new(out)
            }
        }
    }

    /// `A x` without the regularizer.
    pub fn apply(&self, x: &ParamVector) -> ParamVector {
        let y: Vec<f64> = self.to_eigen(x).iter().zip(&self.eigenvalues).map(|(a, e)| a * e).collect();
        self.from_eigen(&y)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    /// Gradient Lipschitz constant `λ_max(A) + λ`.
    pub fn smoothness(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::MIN, f64::max) + self.lambda_reg
    }

    /// PL constant `λ_min(A) + λ`.
    pub fn pl_constant(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::MAX, f64::min) + self.lambda_reg
    }

    pub fn x_star(&self) -> &ParamVector {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// `½ (x − x*)ᵀ(A + λI)(x − x*)`, evaluated without cancellation against `f*`.
    pub fn gap(&self, x: &ParamVector) -> Result<f64> {
        let d = x.scale_add(-1.0, &self.x_star)?;
        let y = self.to_eigen(&d);
        Ok(0.5 * y.iter().zip(&self.eigenvalues).map(|(a, e)| (e + self.lambda_reg) * a * a).sum::<f64>())
    }

    pub fn eval(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        x.check_len(&self.b)?;
        let ax = self.apply(x);
        let f = 0.5 * x.dot(&ax)? - self.b.dot(x)? + 0.5 * self.lambda_reg * x.norm_sq();
        let g = ax.scale_add(-1.0, &self.b)?.scale_add(self.lambda_reg, x)?;
        Ok((f, g))
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn value_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        self.eval(x)
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(self.f_star)
    }
}

/// Rows of a seeded random orthogonal matrix (Gram-Schmidt on Gaussian rows).
fn random_orthonormal(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Two passes of modified Gram-Schmidt for orthogonality to machine precision.
        for _ in 0..2 {
            for r in &rows {
                let proj: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ri) in v.iter_mut().zip(r) {
                    *vi -= proj * ri;
                }
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            rows.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use rand::Rng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec())
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let prob = QuadraticProblem::rotated(vec![1.0, 2.0, 4.0], pv(&[1.0, -2.0, 0.5]), 0.3, 7).unwrap();
        let (_, g) = prob.eval(prob.x_star()).unwrap();
        assert!(g.max_abs() < 1e-12);
        assert!((prob.value(prob.x_star()).unwrap() - prob.f_star()).abs() < 1e-12);
    }

    #[test]
    fn identity_example() {
        let prob = QuadraticProblem::diagonal(vec![1.0, 1.0], ParamVector::zeros(2), 0.0).unwrap();
        let (f, g) = prob.eval(&pv(&[1.0, 0.0])).unwrap();
        assert_eq!(f, 0.5);
        assert_eq!(g, pv(&[1.0, 0.0]));
    }

    #[test]
    fn gap_identity_holds() {
        let prob = QuadraticProblem::rotated(vec![0.5, 1.0, 3.0, 9.0], pv(&[0.2, 0.1, -1.0, 2.0]), 0.1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = ParamVector::new((0..4).map(|_| rng.gen_range(-3.0..3.0)).collect());
            let direct = prob.value(&x).unwrap() - prob.f_star();
            let via_gap = prob.gap(&x).unwrap();
            assert!((direct - via_gap).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn constants_and_pl_witness() {
        let prob = QuadraticProblem::rotated(vec![1.0, 4.0, 2.5], pv(&[1.0, 1.0, 1.0]), 0.0, 11).unwrap();
        assert_eq!(prob.smoothness(), 4.0);
        assert_eq!(prob.pl_constant(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x = ParamVector::new((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect());
            let (_, g) = prob.eval(&x).unwrap();
            let gap = prob.gap(&x).unwrap();
            assert!(0.5 * g.norm_sq() >= prob.pl_constant() * gap * (1.0 - 1e-12));
        }
    }

    #[test]
    fn rotation_is_orthonormal() {
        let v = random_orthonormal(6, 4);
        for i in 0..6 {
            for j in 0..6 {
                let d: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn finite_difference_agreement() {
        let prob = QuadraticProblem::rotated(vec![1.0, 2.0, 3.0, 4.0, 5.0], pv(&[1.0, 0.0, -1.0, 2.0, 0.5]), 0.2, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = ParamVector::new((0..5).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let (_, g) = prob.eval(&x).unwrap();
            let report = check_gradient(|p| prob.value(p), &g, &x, 1e-6, 1e-3).unwrap();
            assert!(report.passes(1e-5), "{report:?}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(QuadraticProblem::diagonal(vec![1.0, 0.0], ParamVector::zeros(2), 0.0).is_err());
        assert!(QuadraticProblem::diagonal(vec![1.0], ParamVector::zeros(2), 0.0).is_err());
        let prob = QuadraticProblem::diagonal(vec![1.0], ParamVector::zeros(1), 0.0).unwrap();
        assert!(prob.eval(&ParamVector::zeros(2)).is_err());
    }
}

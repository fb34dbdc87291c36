//! Chained Rosenbrock `Σ_i 100 (x_{i+1} − x_i²)² + (1 − x_i)²`.

use super::Objective;
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy)]
pub struct Rosenbrock {
    dim: usize,
}

impl Rosenbrock {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Domain(format!("rosenbrock needs dimension >= 2, got {dim}")));
        }
        Ok(Self { dim })
    }

    pub fn eval(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let x = x.as_slice();
        let mut f = 0.0;
        let mut g = vec![0.0; self.dim];
        for i in 0..self.dim - 1 {
            let t = x[i + 1] - x[i] * x[i];
            let u = 1.0 - x[i];
            f += 100.0 * t * t + u * u;
            g[i] += -400.0 * x[i] * t - 2.0 * u;
            g[i + 1] += 200.0 * t;
        }
        Ok((f, ParamVector::new(g)))
    }
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        self.eval(x)
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_values() {
        let r = Rosenbrock::new(4).unwrap();
        assert_eq!(r.eval(&ParamVector::ones(4)).unwrap(), (0.0, ParamVector::zeros(4)));
        let r2 = Rosenbrock::new(2).unwrap();
        let (f, g) = r2.eval(&ParamVector::zeros(2)).unwrap();
        assert_eq!(f, 1.0);
        assert_eq!(g, ParamVector::new(vec![-2.0, 0.0]));
        assert!(Rosenbrock::new(1).is_err());
    }

    #[test]
    fn finite_difference_agreement() {
        let r = Rosenbrock::new(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = ParamVector::new((0..6).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let (_, g) = r.eval(&x).unwrap();
            let report = check_gradient(|p| r.value(p), &g, &x, 1e-6, 1e-3).unwrap();
            assert!(report.passes(1e-6), "{report:?}");
        }
    }
}

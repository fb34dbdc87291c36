//! Flat parameter vectors and the elementwise algebra the optimizers run on.
//!
//! Every diagonal quantity in the optimizer (gradients, curvature diagonals,
//! moving averages, the inner-series iterate) is a [`ParamVector`] of the same
//! length as the parameters themselves. Diagonal matrix products reduce to
//! elementwise products, so this is all the linear algebra the optimizer needs.
//!
//! Hot-loop operations do not check finiteness per element in release builds;
//! callers at module boundaries use [`ParamVector::validate`].

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense, contiguous `f64` coordinate vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    /// Builds a vector and rejects non-finite entries.
    pub fn try_new(coords: Vec<f64>) -> Result<Self> {
        let v = Self(coords);
        v.validate("ParamVector::try_new")?;
        Ok(v)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Returns an error naming the first non-finite coordinate.
    pub fn validate(&self, context: &'static str) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { context, index }),
            None => Ok(()),
        }
    }

    pub fn check_len(&self, other: &ParamVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    /// Elementwise product `a ⊙ b`.
    pub fn hadamard(&self, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, |a, b| a * b)
    }

    /// Elementwise integer power; `n = 0` yields all ones.
    pub fn elementwise_pow(&self, n: u32) -> Result<ParamVector> {
        let exp = i32::try_from(n).map_err(|_| Error::Domain(format!("exponent {n} too large")))?;
        let out = ParamVector(self.0.iter().map(|a| a.powi(exp)).collect());
        out.validate("elementwise_pow")?;
        Ok(out)
    }

    /// `self + s * other`.
    pub fn scale_add(&self, s: f64, other: &ParamVector) -> Result<ParamVector> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn scaled(&self, s: f64) -> ParamVector {
        self.map(|a| a * s)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ParamVector {
        ParamVector(self.0.iter().map(|&a| f(a)).collect())
    }

    pub fn zip_map(&self, other: &ParamVector, mut f: impl FnMut(f64, f64) -> f64) -> Result<ParamVector> {
        self.check_len(other)?;
        Ok(ParamVector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

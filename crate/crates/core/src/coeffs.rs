use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{FmdsError, Result};

/// The `n` coefficient matrices `C_i` (each `p × q`) defining the
/// trajectories `x_i(t) = C_i β(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSet {
    p: usize,
    q: usize,
    mats: Vec<DMatrix<f64>>,
}

impl CoeffSet {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| FmdsError::EmptyInput("coefficient set has no objects".into()))?;
        let (p, q) = first.shape();
        if p == 0 || q == 0 {
            return Err(FmdsError::DimensionMismatch(
                "coefficient matrices must be nonempty".into(),
            ));
        }
        for (i, m) in mats.iter().enumerate() {
            if m.shape() != (p, q) {
                return Err(FmdsError::DimensionMismatch(format!(
                    "object {} has shape {:?}, expected ({p}, {q})",
                    i + 1,
                    m.shape()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(FmdsError::InvalidValue(format!(
                    "object {} has non-finite coefficients",
                    i + 1
                )));
            }
        }
        Ok(CoeffSet { p, q, mats })
    }

    pub fn zeros(n: usize, p: usize, q: usize) -> Self {
        CoeffSet {
            p,
            q,
            mats: vec![DMatrix::zeros(p, q); n],
        }
    }

    pub fn n(&self) -> usize {
        self.mats.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n(), self.p, self.q)
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.mats[i]
    }

    /// Mutable access to two distinct objects at once.
    pub fn pair_mut(&mut self, h: usize, j: usize) -> (&mut DMatrix<f64>, &mut DMatrix<f64>) {
        assert!(h < j, "pair_mut requires h < j");
        let (a, b) = self.mats.split_at_mut(j);
        (&mut a[h], &mut b[0])
    }

    pub fn mats(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn into_mats(self) -> Vec<DMatrix<f64>> {
        self.mats
    }

    pub fn check_shape(&self, n: usize, p: usize, q: usize) -> Result<()> {
        if self.shape() != (n, p, q) {
            return Err(FmdsError::DimensionMismatch(format!(
                "coefficient set has shape (n, p, q) = {:?}, expected ({n}, {p}, {q})",
                self.shape()
            )));
        }
        Ok(())
    }

    /// Position `x_i(t)` of object `i`.
    pub fn position(&self, i: usize, spec: &BasisSpec, t: f64) -> Result<DVector<f64>> {
        if spec.q() != self.q {
            return Err(FmdsError::DimensionMismatch(format!(
                "basis has q = {}, coefficients have q = {}",
                spec.q(),
                self.q
            )));
        }
        let beta = DVector::from_vec(spec.eval(t)?);
        Ok(&self.mats[i] * beta)
    }

    /// Left-multiplies every `C_i` by `gamma`.
    pub fn transformed(&self, gamma: &DMatrix<f64>) -> Self {
        CoeffSet {
            p: gamma.nrows(),
            q: self.q,
            mats: self.mats.iter().map(|c| gamma * c).collect(),
        }
    }

    /// Adds a common `p × q` offset to every object.
    pub fn translated(&self, offset: &DMatrix<f64>) -> Self {
        CoeffSet {
            p: self.p,
            q: self.q,
            mats: self.mats.iter().map(|c| c + offset).collect(),
        }
    }

    /// Reorders objects so that new object `k` is old object `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        CoeffSet {
            p: self.p,
            q: self.q,
            mats: perm.iter().map(|&k| self.mats[k].clone()).collect(),
        }
    }

    /// Largest Frobenius distance between corresponding matrices.
    pub fn max_change(&self, other: &CoeffSet) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

//! Clamped cubic B-spline bases with equally spaced interior knots.
//!
//! A basis with `L` interior knots on `[lo, hi]` has `q = L + 4` functions.
//! The boundary knots are repeated four times, so the basis is a
//! nonnegative partition of unity and at most four functions are nonzero at
//! any point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FmdsError, Result};

/// Spline order (degree + 1). Only cubic splines are supported.
pub const ORDER: usize = 4;
const DEGREE: usize = ORDER - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    domain_lo: f64,
    domain_hi: f64,
    interior_knots: usize,
    #[serde(skip)]
    knots: Vec<f64>,
}

impl BasisSpec {
    /// Builds a clamped cubic basis with `interior_knots` equally spaced
    /// knots strictly inside `(domain_lo, domain_hi)`.
    pub fn new(interior_knots: usize, domain_lo: f64, domain_hi: f64) -> Result<Self> {
        if !(domain_lo.is_finite() && domain_hi.is_finite()) || domain_lo >= domain_hi {
            return Err(FmdsError::InvalidDomain {
                lo: domain_lo,
                hi: domain_hi,
            });
        }
        if interior_knots < 1 {
            return Err(FmdsError::InvalidCount(
                "at least one interior knot is required".into(),
            ));
        }
        let mut spec = BasisSpec {
            domain_lo,
            domain_hi,
            interior_knots,
            knots: Vec::new(),
        };
        spec.knots = spec.build_knots();
        Ok(spec)
    }

    fn build_knots(&self) -> Vec<f64> {
        let l = self.interior_knots;
        let width = self.domain_hi - self.domain_lo;
        let mut knots = Vec::with_capacity(l + 2 * ORDER);
        knots.extend(std::iter::repeat_n(self.domain_lo, ORDER));
        knots.extend((1..=l).map(|i| self.domain_lo + i as f64 * width / (l + 1) as f64));
        knots.extend(std::iter::repeat_n(self.domain_hi, ORDER));
        knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn interior_knots(&self) -> usize {
        self.interior_knots
    }

    /// Number of basis functions, `L + 4`.
    pub fn q(&self) -> usize {
        self.interior_knots + ORDER
    }

    /// The full clamped knot vector (length `q + 4`).
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.domain_lo && t <= self.domain_hi
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(FmdsError::OutOfDomain {
                t,
                lo: self.domain_lo,
                hi: self.domain_hi,
            })
        }
    }

    /// Index `s` of the knot span with `knots[s] <= t < knots[s + 1]`.
        fn span(&self, t: f64) -> usize {
        let q = self.q();
        // knots[DEGREE..=q] are the distinct breakpoints
        let upper = self.knots[DEGREE..=q].partition_point(|&k| k <= t);
        (DEGREE + upper - 1).clamp(DEGREE, q - 1)
    }

    /// Evaluates the four possibly nonzero basis functions at `t`.
    ///
    /// Returns `(start, w)` where `w[r]` is the value of function `start + r`.
    pub fn eval_local(&self, t: f64) -> Result<(usize, [f64; ORDER])> {
        self.check(t)?;
        if t == self.domain_hi {
            return Ok((self.q() - ORDER, [0.0, 0.0, 0.0, 1.0]));
        }
        let s = self.span(t);
        let u = &self.knots;
        let mut n = [0.0; ORDER];
        let mut left = [0.0; ORDER];
        let mut right = [0.0; ORDER];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = t - u[s + 1 - j];
            right[j] = u[s + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        Ok((s - DEGREE, n))
    }

    /// Dense basis vector `β(t)` of length `q`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (start, w) = self.eval_local(t)?;
        let mut out = vec![0.0; self.q()];
        out[start..start + ORDER].copy_from_slice(&w);
        Ok(out)
    }

    /// Precomputes the basis on a grid of time points.
    pub fn on_grid(&self, grid: &[f64]) -> Result<GridBasis> {
        let mut starts = Vec::with_capacity(grid.len());
        let mut weights = Vec::with_capacity(grid.len());
        for &t in grid {
            let (s, w) = self.eval_local(t)?;
            starts.push(s);
            weights.push(w);
        }
        Ok(GridBasis {
            q: self.q(),
            starts,
            weights,
        })
    }
}

/// Basis values on a fixed time grid, stored in local (sparse) form.
#[derive(Debug, Clone)]
pub struct GridBasis {
    q: usize,
    starts: Vec<usize>,
    weights: Vec<[f64; ORDER]>,
}

impl GridBasis {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn local(&self, k: usize) -> (usize, &[f64; ORDER]) {
        (self.starts[k], &self.weights[k])
    }

    /// Writes `C β(t_k)` into `out` (length `p`), for a `p × q` matrix `c`.
    #[inline]
    pub fn apply(&self, c: &DMatrix<f64>, k: usize, out: &mut [f64]) {
        let p = c.nrows();
        let (start, w) = self.local(k);
        let data = c.as_slice();
        out.iter_mut().for_each(|x| *x = 0.0);
        for (r, &wr) in w.iter().enumerate() {
            let col = &data[(start + r) * p..(start + r + 1) * p];
            for (o, &v) in out.iter_mut().zip(col) {
                *o += wr * v;
            }
        }
    }

    /// Dense `m × q` design matrix whose row `k` is `β(t_k)ᵀ`.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.len(), self.q);
        for k in 0..self.len() {
            let (start, w) = self.local(k);
            for (r, &v) in w.iter().enumerate() {
                b[(k, start + r)] = v;
            }
        }
        b
    }
}

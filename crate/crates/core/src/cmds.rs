//! Classical MDS and the initial coefficient matrices built from it.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::coeffs::CoeffSet;
use crate::dissim::DissimilaritySeries;
use crate::error::{FmdsError, Result};
use crate::linalg::procrustes_rotation;

/// How a single CMDS run is turned into time-varying initial coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// CMDS of the time-averaged dissimilarity matrix; constant curves.
    #[default]
    MeanMatrix,
    /// CMDS at every time point, chained by Procrustes, then a least-squares
    /// fit of the aligned points on the basis.
    PerTimepoint,
}

impl std::str::FromStr for InitStrategy {
    type Err = FmdsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-matrix" | "mean" => Ok(InitStrategy::MeanMatrix),
            "per-timepoint" | "per-time" => Ok(InitStrategy::PerTimepoint),
            other => Err(FmdsError::InvalidValue(format!(
                "unknown init strategy {other:?} (expected mean-matrix or per-timepoint)"
            ))),
        }
    }
}

/// Classical (Torgerson) MDS: `n × p` coordinates whose pairwise distances
/// approximate `d`.
///
/// Negative eigenvalues are clamped to zero, and each eigenvector is signed
/// so that its largest-magnitude entry is positive.
pub fn classical_mds(d: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(FmdsError::DimensionMismatch(format!(
            "dissimilarity matrix is {}×{}",
            n,
            d.ncols()
        )));
    }
    if p < 1 || p >= n {
        return Err(FmdsError::InvalidCount(format!(
            "embedding dimension p = {p} must satisfy 1 <= p < n = {n}"
        )));
    }
    let scale = d.amax().max(1.0);
    let asym = (d - d.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(FmdsError::NonSymmetric(asym));
    }
    if d.diagonal().amax() > 1e-9 * scale || d.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(FmdsError::InvalidValue(
            "dissimilarities must be finite, nonnegative, with a zero diagonal".into(),
        ));
    }

    // B = -1/2 J D∘D J
    let sq = d.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let b = (&b + b.transpose()) * 0.5;

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));

    let mut x = DMatrix::zeros(n, p);
    for (col, &idx) in order.iter().take(p).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let mut v = eig.eigenvectors.column(idx).clone_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        x.set_column(col, &(v * lambda.sqrt()));
    }
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(x)
}

/// Initial coefficient matrices for the optimizer.
pub fn init_coeffs(
    series: &DissimilaritySeries,
    spec: &BasisSpec,
    p: usize,
    strategy: InitStrategy,
) -> Result<CoeffSet> {
    series.check_domain(spec)?;
    let n = series.n();
    let q = spec.q();
    match strategy {
        InitStrategy::MeanMatrix => {
            let x = classical_mds(&series.mean_matrix(), p)?;
            let mats = (0..n)
                .map(|i| DMatrix::from_fn(p, q, |r, _| x[(i, r)]))
                .collect();
            CoeffSet::new(mats)
        }
        InitStrategy::PerTimepoint => {
            let m = series.m();
            let configs: Vec<DMatrix<f64>> = (0..m)
                .into_par_iter()
                .map(|k| classical_mds(&series.matrix_at(k), p).map(|x| x.transpose()))
                .collect::<Result<_>>()?;
            // chain-align each p × n configuration to its predecessor
            let mut aligned: Vec<DMatrix<f64>> = Vec::with_capacity(m);
            for cfg in configs {
                let next = match aligned.last() {
                    Some(prev) => procrustes_rotation(&cfg, prev) * cfg,
                    None => cfg,
                };
                aligned.push(next);
            }
            let design = spec.on_grid(series.grid())?.dense();
            // minimum-norm least squares when m < q
            let pinv = design
                .pseudo_inverse(1e-12)
                .map_err(|e| FmdsError::InvalidValue(e.to_string()))?;
            let mats = (0..n)
                .map(|i| {
                    let pts = DMatrix::from_fn(p, m, |r, k| aligned[k][(r, i)]);
                    pts * pinv.transpose()
                })
                .collect();
            CoeffSet::new(mats)
        }
    }
}

//! Read-only reports over a fitted coefficient set.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::coeffs::CoeffSet;
use crate::dissim::{euclidean_series, pair_count, pairs, pearson, DissimilaritySeries};
use crate::error::{FmdsError, Result};

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.3;
pub const DEFAULT_RESIDUAL_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub object: usize,
    pub t: f64,
    pub x: Vec<f64>,
}

/// Positions `x_i(t) = Ĉ_i β(t)` of every object at each requested `t`.
pub fn snapshot(coeffs: &CoeffSet, spec: &BasisSpec, times: &[f64]) -> Result<Vec<SnapshotRow>> {
    if coeffs.q() != spec.q() {
        return Err(FmdsError::DimensionMismatch(format!(
            "basis has q = {}, coefficients have q = {}",
            spec.q(),
            coeffs.q()
        )));
    }
    let mut rows = Vec::with_capacity(times.len() * coeffs.n());
    for &t in times {
        let beta = DVector::from_vec(spec.eval(t)?);
        for (i, c) in coeffs.mats().iter().enumerate() {
            rows.push(SnapshotRow {
                object: i,
                t,
                x: (c * &beta).iter().copied().collect(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub center: usize,
    pub threshold: f64,
    pub t: f64,
    /// Objects with `d̂ < threshold`, with their distances.
    pub red: Vec<(usize, f64)>,
    /// Objects with `d̂ ≥ threshold`.
    pub blue: Vec<(usize, f64)>,
}

/// Splits all non-center objects by their estimated distance to `center` at `t`.
pub fn cluster(
    coeffs: &CoeffSet,
    spec: &BasisSpec,
    center: usize,
    threshold: f64,
    t: f64,
) -> Result<ClusterReport> {
    if center >= coeffs.n() {
        return Err(FmdsError::IndexOutOfRange(format!(
            "center {center} with n = {}",
            coeffs.n()
        )));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(FmdsError::InvalidValue(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let x0 = coeffs.position(center, spec, t)?;
    let mut red = Vec::new();
    let mut blue = Vec::new();
    for j in (0..coeffs.n()).filter(|&j| j != center) {
        let d = (coeffs.position(j, spec, t)? - &x0).norm();
        if d < threshold {
            red.push((j, d));
        } else {
            blue.push((j, d));
        }
    }
    Ok(ClusterReport {
        center,
        threshold,
        t,
        red,
        blue,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShepardRow {
    pub i: usize,
    pub j: usize,
    pub t: f64,
    pub observed: f64,
    pub estimated: f64,
}

fn estimated(coeffs: &CoeffSet, spec: &BasisSpec, series: &DissimilaritySeries) -> Result<DissimilaritySeries> {
    if coeffs.n() != series.n() {
        return Err(FmdsError::DimensionMismatch(format!(
            "coefficients cover {} objects, dissimilarities {}",
            coeffs.n(),
            series.n()
        )));
    }
    euclidean_series(coeffs, spec, series.grid())
}

/// Observed against estimated dissimilarity for every pair and grid point,
/// pairs in storage order, time fastest.
pub fn shepard(coeffs: &CoeffSet, spec: &BasisSpec, series: &DissimilaritySeries) -> Result<Vec<ShepardRow>> {
    let est = estimated(coeffs, spec, series)?;
    let m = series.m();
    let mut rows = Vec::with_capacity(pair_count(series.n()) * m);
    for (idx, (i, j)) in pairs(series.n()).enumerate() {
        for k in 0..m {
            rows.push(ShepardRow {
                i,
                j,
                t: series.grid()[k],
                observed: series.values()[idx * m + k],
                estimated: est.values()[idx * m + k],
            });
        }
    }
    Ok(rows)
}

/// Pearson correlation of observed and estimated values at each grid point.
pub fn shepard_correlations(rows: &[ShepardRow], grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&t| {
            let (obs, est): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.t == t)
                .map(|r| (r.observed, r.estimated))
                .unzip();
            pearson(&obs, &est, &format!("Shepard data at t = {t}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub tolerance: f64,
    pub mean: f64,
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Share of pairs whose largest absolute residual over all grid points
    /// is within `tolerance`.
    pub pair_fraction: f64,
    /// Share of individual (pair, grid point) cells within `tolerance`.
    pub cell_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `d̂_ij(t_k) − d_ij(t_k)` as Shepard-ordered rows.
    pub rows: Vec<ShepardRow>,
    pub summary: ResidualSummary,
}

impl ShepardRow {
    pub fn residual(&self) -> f64 {
        self.estimated - self.observed
    }
}

pub fn residuals(
    coeffs: &CoeffSet,
    spec: &BasisSpec,
    series: &DissimilaritySeries,
    tolerance: f64,
) -> Result<ResidualReport> {
    if !(tolerance >= 0.0) {
        return Err(FmdsError::InvalidValue(format!(
            "tolerance must be nonnegative, got {tolerance}"
        )));
    }
    let rows = shepard(coeffs, spec, series)?;
    let m = series.m();
    let cells = rows.len() as f64;
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut cells_ok = 0usize;
    let mut pairs_ok = 0usize;
    for chunk in rows.chunks(m) {
        let mut pair_max: f64 = 0.0;
        for r in chunk {
            let res = r.residual();
            sum += res;
            sum_abs += res.abs();
            pair_max = pair_max.max(res.abs());
            if res.abs() <= tolerance {
                cells_ok += 1;
            }
        }
        max_abs = max_abs.max(pair_max);
        if pair_max <= tolerance {
            pairs_ok += 1;
        }
    }
    let summary = ResidualSummary {
        tolerance,
        mean: sum / cells,
        mean_abs: sum_abs / cells,
        max_abs,
        pair_fraction: pairs_ok as f64 / pair_count(series.n()) as f64,
        cell_fraction: cells_ok as f64 / cells,
    };
    Ok(ResidualReport { rows, summary })
}

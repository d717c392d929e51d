//! Time-varying dissimilarities.
//!
//! Pairs `i < j` are stored in column-by-column upper-triangle order,
//! `(1,2), (1,3), (2,3), (1,4), (2,4), (3,4), …`, which is also the row order
//! of the super dissimilarity matrix.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::coeffs::CoeffSet;
use crate::error::{FmdsError, Result};

/// Position of pair `(i, j)`, `i < j`, zero-based, in upper-triangle order.
#[inline]
pub fn pair_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    j * (j - 1) / 2 + i
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(idx: usize) -> (usize, usize) {
    // largest j with j(j-1)/2 <= idx
    let mut j = ((1.0 + (1.0 + 8.0 * idx as f64).sqrt()) / 2.0).floor() as usize;
    while j * (j - 1) / 2 > idx {
        j -= 1;
    }
    while (j + 1) * j / 2 <= idx {
        j += 1;
    }
    (idx - j * (j - 1) / 2, j)
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Iterates all pairs `(i, j)`, `i < j`, in storage order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..n).flat_map(|j| (0..j).map(move |i| (i, j)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilaritySeries {
    n: usize,
    grid: Vec<f64>,
    /// `pair_count(n) × m`, row-major.
    values: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl DissimilaritySeries {
    pub fn new(n: usize, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(FmdsError::InvalidCount(format!(
                "need at least 2 objects, got {n}"
            )));
        }
        if grid.is_empty() {
            return Err(FmdsError::EmptyInput("time grid is empty".into()));
        }
        if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FmdsError::InvalidValue(
                "time grid must be finite and strictly increasing".into(),
            ));
        }
        if values.len() != pair_count(n) * grid.len() {
            return Err(FmdsError::DimensionMismatch(format!(
                "expected {} values for n = {n}, m = {}, got {}",
                pair_count(n) * grid.len(),
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            let (i, j) = pair_from_index(pos / grid.len());
            return Err(FmdsError::InvalidValue(format!(
                "dissimilarity for pair ({}, {}) at t = {} is {} (must be finite and nonnegative)",
                i + 1,
                j + 1,
                grid[pos % grid.len()],
                values[pos]
            )));
        }
        Ok(DissimilaritySeries {
            n,
            grid,
            values,
            labels: None,
        })
    }

    /// Builds a series from one symmetric `n × n` matrix per time point.
    pub fn from_matrices(grid: Vec<f64>, mats: &[DMatrix<f64>]) -> Result<Self> {
        let n = mats.first().map(|m| m.nrows()).unwrap_or(0);
        if mats.len() != grid.len() {
            return Err(FmdsError::DimensionMismatch(
                "one matrix per time point required".into(),
            ));
        }
        let m = grid.len();
        let mut values = vec![0.0; pair_count(n) * m];
        for (k, d) in mats.iter().enumerate() {
            if d.shape() != (n, n) {
                return Err(FmdsError::DimensionMismatch(
                    "all dissimilarity matrices must be n × n".into(),
                ));
            }
            for (idx, (i, j)) in pairs(n).enumerate() {
                values[idx * m + k] = d[(i, j)];
            }
        }
        Self::new(n, grid, values)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(FmdsError::DimensionMismatch(format!(
                "{} labels for {} objects",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Labels, falling back to 1-based indices.
    pub fn label_or_index(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    /// `d_ij(t_k)` for zero-based `i != j`; zero on the diagonal.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.values[pair_index(i, j) * self.m() + k],
            std::cmp::Ordering::Greater => self.values[pair_index(j, i) * self.m() + k],
        }
    }

    /// The `m` values of pair `(i, j)`, `i < j`.
    pub fn pair_values(&self, i: usize, j: usize) -> &[f64] {
        let m = self.m();
        let idx = pair_index(i, j);
        &self.values[idx * m..(idx + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Full symmetric matrix `D(t_k)`.
    pub fn matrix_at(&self, k: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, j) in pairs(self.n) {
            let v = self.get(i, j, k);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    }

    /// Elementwise time average of `D(t_k)`.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let m = self.m() as f64;
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, j) in pairs(self.n) {
            let v = self.pair_values(i, j).iter().sum::<f64>() / m;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    }

    pub fn super_matrix(&self) -> SuperMatrix {
        SuperMatrix {
            n: self.n,
            grid: self.grid.clone(),
            values: self.values.clone(),
        }
    }

    /// Checks that every grid point lies in the basis domain.
    pub fn check_domain(&self, spec: &BasisSpec) -> Result<()> {
        let (lo, hi) = spec.domain();
        if let Some(&t) = self.grid.iter().find(|&&t| !spec.contains(t)) {
            return Err(FmdsError::OutOfDomain { t, lo, hi });
        }
        Ok(())
    }
}

/// Pairs × time table of dissimilarities, rows in upper-triangle order.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperMatrix {
    n: usize,
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SuperMatrix {
    pub fn rows(&self) -> usize {
        pair_count(self.n)
    }

    pub fn cols(&self) -> usize {
        self.grid.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// One-based `(i, j)` label of a row.
    pub fn row_label(&self, row: usize) -> (usize, usize) {
        let (i, j) = pair_from_index(row);
        (i + 1, j + 1)
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let m = self.cols();
        &self.values[row * m..(row + 1) * m]
    }

    pub fn into_series(self) -> Result<DissimilaritySeries> {
        DissimilaritySeries::new(self.n, self.grid, self.values)
    }

    /// Rebuilds the table from explicit rows; the `(i, j)` labels must be in
    /// upper-triangle order.
    pub fn from_rows(grid: Vec<f64>, rows: Vec<((usize, usize), Vec<f64>)>) -> Result<Self> {
        let count = rows.len();
        let mut n = 2;
        while pair_count(n) < count {
            n += 1;
        }
        if pair_count(n) != count {
            return Err(FmdsError::DimensionMismatch(format!(
                "{count} rows is not a triangular number of pairs"
            )));
        }
        let mut values = Vec::with_capacity(count * grid.len());
        for (row, ((i, j), v)) in rows.into_iter().enumerate() {
            let expect = pair_from_index(row);
            if (i, j) != (expect.0 + 1, expect.1 + 1) {
                return Err(FmdsError::InvalidValue(format!(
                    "row {} is pair ({i}, {j}), expected ({}, {})",
                    row + 1,
                    expect.0 + 1,
                    expect.1 + 1
                )));
            }
            if v.len() != grid.len() {
                return Err(FmdsError::DimensionMismatch(format!(
                    "row {} has {} values, expected {}",
                    row + 1,
                    v.len(),
                    grid.len()
                )));
            }
            values.extend(v);
        }
        Ok(SuperMatrix { n, grid, values })
    }
}

/// `d_ij(t_k) = ‖C_i β(t_k) − C_j β(t_k)‖` for a known coefficient set.
pub fn euclidean_series(
    truth: &CoeffSet,
    spec: &BasisSpec,
    grid: &[f64],
) -> Result<DissimilaritySeries> {
    if truth.q() != spec.q() {
        return Err(FmdsError::DimensionMismatch(format!(
            "basis has q = {}, coefficients have q = {}",
            spec.q(),
            truth.q()
        )));
    }
    let basis = spec.on_grid(grid)?;
    let (n, p, _) = truth.shape();
    let m = grid.len();
    let mut pos = vec![0.0; n * m * p];
    for i in 0..n {
        for k in 0..m {
            let off = (i * m + k) * p;
            basis.apply(truth.get(i), k, &mut pos[off..off + p]);
        }
    }
    let mut values = vec![0.0; pair_count(n) * m];
    for (idx, (i, j)) in pairs(n).enumerate() {
        for k in 0..m {
            let a = &pos[(i * m + k) * p..(i * m + k + 1) * p];
            let b = &pos[(j * m + k) * p..(j * m + k + 1) * p];
            values[idx * m + k] = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
        }
    }
    DissimilaritySeries::new(n, grid.to_vec(), values)
}

/// Closing prices grouped by calendar month.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    months: Vec<String>,
    /// `closes[month][ticker]` holds that ticker's closes on the month's
    /// trading days, in date order.
    closes: Vec<Vec<Vec<f64>>>,
}

impl PricePanel {
    pub fn new(tickers: Vec<String>, months: Vec<String>, closes: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if tickers.len() < 2 {
            return Err(FmdsError::InsufficientData(format!(
                "need at least 2 tickers, got {}",
                tickers.len()
            )));
        }
        if months.is_empty() || months.len() != closes.len() {
            return Err(FmdsError::DimensionMismatch(
                "one block of closes per month required".into(),
            ));
        }
        for (month, block) in months.iter().zip(&closes) {
            if block.len() != tickers.len() {
                return Err(FmdsError::DimensionMismatch(format!(
                    "month {month}: {} price vectors for {} tickers",
                    block.len(),
                    tickers.len()
                )));
            }
            let r = block[0].len();
            for (ticker, prices) in tickers.iter().zip(block) {
                if prices.len() != r {
                    return Err(FmdsError::DimensionMismatch(format!(
                        "month {month}: ticker {ticker} has {} days, expected {r}",
                        prices.len()
                    )));
                }
                if prices.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
                    return Err(FmdsError::InvalidValue(format!(
                        "month {month}: ticker {ticker} has a non-positive price"
                    )));
                }
            }
        }
        Ok(PricePanel {
            tickers,
            months,
            closes,
        })
    }

    /// Groups `(date, ticker, close)` records by calendar month.
    ///
    /// A ticker missing any trading day of any month (a trading day being a
    /// date on which at least one ticker traded) is dropped with a warning.
    pub fn from_records(records: &[(NaiveDate, String, f64)]) -> Result<Self> {
        let mut by_month: BTreeMap<(i32, u32), BTreeMap<NaiveDate, BTreeMap<&str, f64>>> =
            BTreeMap::new();
        let mut all: BTreeSet<&str> = BTreeSet::new();
        for (date, ticker, close) in records {
            all.insert(ticker.as_str());
            let day = by_month
                .entry((date.year(), date.month()))
                .or_default()
                .entry(*date)
                .or_default();
            if day.insert(ticker.as_str(), *close).is_some() {
                return Err(FmdsError::InvalidValue(format!(
                    "duplicate price for {ticker} on {date}"
                )));
            }
        }
        let kept: Vec<&str> = all
            .iter()
            .copied()
            .filter(|t| {
                let complete = by_month
                    .values()
                    .all(|days| days.values().all(|d| d.contains_key(t)));
                if !complete {
                    log::warn!("dropping ticker {t}: incomplete price history");
                }
                complete
            })
            .collect();
        let months = by_month
            .keys()
            .map(|(y, m)| format!("{y:04}-{m:02}"))
            .collect();
        let closes = by_month
            .values()
            .map(|days| {
                kept.iter()
                    .map(|t| days.values().map(|d| d[t]).collect())
                    .collect()
            })
            .collect();
        Self::new(kept.into_iter().map(String::from).collect(), months, closes)
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn months(&self) -> &[String] {
        &self.months
    }

    /// Closes of ticker `i` in month `t` (zero-based).
    pub fn closes(&self, t: usize, i: usize) -> &[f64] {
        &self.closes[t][i]
    }
}

/// Pearson correlation of two equal-length vectors.
///
/// `what` names the inputs in error messages.
pub fn pearson(x: &[f64], y: &[f64], what: &str) -> Result<f64> {
    let r = x.len();
    if r < 2 || y.len() != r {
        return Err(FmdsError::InsufficientData(format!(
            "{what}: need at least 2 paired observations"
        )));
    }
    let mx = x.iter().sum::<f64>() / r as f64;
    let my = y.iter().sum::<f64>() / r as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FmdsError::DegenerateSeries(format!(
            "{what}: zero variance"
        )));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `d_ij(t) = (1 − R_ij(t)) / 2` from within-month Pearson correlations of
/// closing prices. Months become grid points `1, 2, …, M`.
pub fn correlation_dissim(panel: &PricePanel) -> Result<DissimilaritySeries> {
    let n = panel.tickers.len();
    let m = panel.months.len();
    for (t, month) in panel.months.iter().enumerate() {
        let r = panel.closes[t][0].len();
        if r < 2 {
            return Err(FmdsError::InsufficientData(format!(
                "month {month} has {r} trading day(s); need at least 2"
            )));
        }
        for (i, ticker) in panel.tickers.iter().enumerate() {
            let c = &panel.closes[t][i];
            if c.iter().all(|&v| v == c[0]) {
                return Err(FmdsError::DegenerateSeries(format!(
                    "ticker {ticker} has constant prices in month {month}"
                )));
            }
        }
    }
    let per_pair: Vec<Vec<f64>> = pairs(n)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| {
            (0..m)
                .map(|t| {
                    let what = format!(
                        "{} vs {} in {}",
                        panel.tickers[i], panel.tickers[j], panel.months[t]
                    );
                    pearson(&panel.closes[t][i], &panel.closes[t][j], &what)
                        .map(|r| (1.0 - r) / 2.0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let grid = (1..=m).map(|t| t as f64).collect();
    DissimilaritySeries::new(n, grid, per_pair.concat())?.with_labels(panel.tickers.clone())
}

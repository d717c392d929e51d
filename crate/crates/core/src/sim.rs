//! Synthetic scenarios, error metrics, and replication studies.

use std::time::Instant;

use chrono::{Datelike, NaiveDate};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align, CurvilinearConfig};
use crate::basis::BasisSpec;
use crate::cmds::{init_coeffs, InitStrategy};
use crate::coeffs::CoeffSet;
use crate::dissim::{euclidean_series, pair_count, DissimilaritySeries};
use crate::error::{FmdsError, Result};
use crate::optimizer::{fit, FitConfig};

/// One simulation cell: `n` objects in `p` dimensions, a cubic basis with
/// `interior_knots` knots on `[1, m]`, observed at `t = 1, …, m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n: usize,
    pub p: usize,
    pub interior_knots: usize,
    pub m: usize,
    pub reps: usize,
    /// Covariance of `vec(C_i)` (`pq × pq`); `None` is the identity.
    pub sigma: Option<DMatrix<f64>>,
    pub seed: u64,
    pub init: InitStrategy,
    pub fit: FitConfig,
    pub align: CurvilinearConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 50,
            p: 2,
            interior_knots: 5,
            m: 15,
            reps: 20,
            sigma: None,
            seed: 0,
            init: InitStrategy::MeanMatrix,
            fit: FitConfig::default(),
            align: CurvilinearConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn q(&self) -> usize {
        self.interior_knots + 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 || self.reps < 1 || self.m < 2 {
            return Err(FmdsError::InvalidValue(format!(
                "scenario needs n >= 2, p >= 1, m >= 2, reps >= 1 (got n={}, p={}, m={}, reps={})",
                self.n, self.p, self.m, self.reps
            )));
        }
        if self.p >= self.n {
            return Err(FmdsError::InvalidValue(format!(
                "p = {} must be below n = {}",
                self.p, self.n
            )));
        }
        if let Some(s) = &self.sigma {
            let d = self.p * self.q();
            if s.shape() != (d, d) {
                return Err(FmdsError::DimensionMismatch(format!(
                    "sigma is {:?}, expected {d}×{d}",
                    s.shape()
                )));
            }
        }
        self.fit.validate()?;
        self.align.validate()
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replication stream, a pure function of its coordinates.
pub fn derive_seed(master: u64, interior_knots: usize, m: usize, rep: usize, stream: u64) -> u64 {
    [interior_knots as u64, m as u64, rep as u64, stream]
        .iter()
        .fold(mix(master), |acc, &v| mix(acc ^ v))
}

const STREAM_DATA: u64 = 1;
const STREAM_FIT: u64 = 2;
const STREAM_ALIGN: u64 = 3;

/// Factor `F` with `F Fᵀ = Σ` for a symmetric positive semidefinite `Σ`.
fn covariance_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = sigma.amax().max(1.0);
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(FmdsError::NonSymmetric(asym));
    }
    let eig = SymmetricEigen::new(sigma.clone());
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(FmdsError::InvalidValue(
            "sigma is not positive semidefinite".into(),
        ));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: CoeffSet,
    pub series: DissimilaritySeries,
    pub spec: BasisSpec,
}

/// Draws `vec(C_i) ~ N(0, Σ)` independently for every object and builds the
/// Euclidean dissimilarity series on `t = 1, …, m`.
pub fn gen_scenario(config: &ScenarioConfig, rep: usize) -> Result<Scenario> {
    config.validate()?;
    let spec = BasisSpec::new(config.interior_knots, 1.0, config.m as f64)?;
    let (p, q) = (config.p, spec.q());
    let factor = config.sigma.as_ref().map(covariance_factor).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        config.interior_knots,
        config.m,
        rep,
        STREAM_DATA,
    ));
    let mats = (0..config.n)
        .map(|_| {
            let z = nalgebra::DVector::from_fn(p * q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let v = match &factor {
                Some(f) => f * z,
                None => z,
            };
            // vec() stacks columns, which is nalgebra's storage order
            DMatrix::from_column_slice(p, q, v.as_slice())
        })
        .collect();
    let truth = CoeffSet::new(mats)?;
    let grid: Vec<f64> = (1..=config.m).map(|k| k as f64).collect();
    let series = euclidean_series(&truth, &spec, &grid)?;
    Ok(Scenario {
        truth,
        series,
        spec,
    })
}

/// Mean squared difference between observed and fitted dissimilarities,
/// averaged over all `m · n(n − 1)/2` pair-time cells.
pub fn mse_dissim(series: &DissimilaritySeries, fitted: &CoeffSet, spec: &BasisSpec) -> Result<f64> {
    if fitted.n() != series.n() || fitted.q() != spec.q() {
        return Err(FmdsError::DimensionMismatch(format!(
            "fitted shape {:?} does not match n = {} and q = {}",
            fitted.shape(),
            series.n(),
            spec.q()
        )));
    }
    let est = euclidean_series(fitted, spec, series.grid())?;
    let total: f64 = series
        .values()
        .iter()
        .zip(est.values())
        .map(|(d, e)| (d - e) * (d - e))
        .sum();
    Ok(total / (series.m() * pair_count(series.n())) as f64)
}

/// Square root of the mean of per-replication MSE values.
pub fn rmse(mse_values: &[f64]) -> Result<f64> {
    if mse_values.is_empty() {
        return Err(FmdsError::EmptyInput("no MSE values to aggregate".into()));
    }
    Ok((mse_values.iter().sum::<f64>() / mse_values.len() as f64).sqrt())
}

/// Mean squared difference between the entries of `Γ̂ Ĉ_i` and `C_i`.
pub fn mse_coeff(gamma_hat: &DMatrix<f64>, fitted: &CoeffSet, truth: &CoeffSet) -> Result<f64> {
    let (n, p, q) = truth.shape();
    if fitted.shape() != truth.shape() || gamma_hat.shape() != (p, p) {
        return Err(FmdsError::DimensionMismatch(format!(
            "Γ̂ {:?}, fitted {:?}, reference {:?}",
            gamma_hat.shape(),
            fitted.shape(),
            truth.shape()
        )));
    }
    let total: f64 = fitted
        .mats()
        .iter()
        .zip(truth.mats())
        .map(|(c_hat, c)| (gamma_hat * c_hat - c).norm_squared())
        .sum();
    Ok(total / (n * p * q) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub mse_dissim: f64,
    pub mse_coeff: f64,
    pub initial_f: f64,
    pub final_f: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub align_objective: f64,
    pub align_converged: bool,
    pub fit_seconds: f64,
    pub align_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    pub p: usize,
    pub interior_knots: usize,
    pub m: usize,
    pub rmse_dissim: f64,
    pub rmse_coeff: f64,
    pub replications: Vec<ReplicationRecord>,
    /// `(rep, message)` for replications that failed and were excluded.
    pub failures: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub cells: Vec<CellReport>,
    pub total_seconds: f64,
}

impl StudyReport {
    pub fn cell(&self, interior_knots: usize, m: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.interior_knots == interior_knots && c.m == m)
    }
}

/// Generate, initialize, fit, align, and score one replication.
pub fn run_replication(config: &ScenarioConfig, rep: usize) -> Result<ReplicationRecord> {
    let sc = gen_scenario(config, rep)?;
    let init = init_coeffs(&sc.series, &sc.spec, config.p, config.init)?;
    let fit_cfg = FitConfig {
        seed: derive_seed(config.seed, config.interior_knots, config.m, rep, STREAM_FIT),
        ..config.fit.clone()
    };
    let started = Instant::now();
    let fitted = fit(&sc.series, &sc.spec, &fit_cfg, &init)?;
    let fit_seconds = started.elapsed().as_secs_f64();

    let align_cfg = CurvilinearConfig {
        seed: derive_seed(config.seed, config.interior_knots, config.m, rep, STREAM_ALIGN),
        ..config.align.clone()
    };
    let started = Instant::now();
    let aligned = align(&fitted.coeffs, &sc.truth, &sc.spec, config.m, &align_cfg)?;
    let align_seconds = started.elapsed().as_secs_f64();

    Ok(ReplicationRecord {
        rep,
        mse_dissim: mse_dissim(&sc.series, &fitted.coeffs, &sc.spec)?,
        mse_coeff: mse_coeff(&aligned.gamma_hat, &fitted.coeffs, &sc.truth)?,
        initial_f: fitted.initial_f,
        final_f: fitted.final_f,
        sweeps: fitted.sweeps_used,
        converged: fitted.converged,
        align_objective: aligned.objective,
        align_converged: aligned.converged,
        fit_seconds,
        align_seconds,
    })
}

/// Runs every replication of every cell. Replications run in parallel; the
/// report is identical regardless of scheduling.
pub fn run_study(cells: &[ScenarioConfig]) -> Result<StudyReport> {
    if cells.is_empty() {
        return Err(FmdsError::EmptyInput("study grid has no cells".into()));
    }
    for c in cells {
        c.validate()?;
    }
    let started = Instant::now();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.reps).map(move |r| (ci, r)))
        .collect();
    let outcomes: Vec<Result<ReplicationRecord>> = jobs
        .par_iter()
        .map(|&(ci, rep)| run_replication(&cells[ci], rep))
        .collect();

    let mut reports: Vec<CellReport> = cells
        .iter()
        .map(|c| CellReport {
            n: c.n,
            p: c.p,
            interior_knots: c.interior_knots,
            m: c.m,
            rmse_dissim: f64::NAN,
            rmse_coeff: f64::NAN,
            replications: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (&(ci, rep), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(rec) => reports[ci].replications.push(rec),
            Err(e) => {
                log::warn!(
                    "L={} m={} rep {rep} failed and is excluded: {e}",
                    cells[ci].interior_knots,
                    cells[ci].m
                );
                reports[ci].failures.push((rep, e.to_string()));
            }
        }
    }
    for cell in &mut reports {
        if cell.replications.is_empty() {
            log::warn!(
                "L={} m={}: every replication failed",
                cell.interior_knots,
                cell.m
            );
            continue;
        }
        let d: Vec<f64> = cell.replications.iter().map(|r| r.mse_dissim).collect();
        let c: Vec<f64> = cell.replications.iter().map(|r| r.mse_coeff).collect();
        cell.rmse_dissim = rmse(&d)?;
        cell.rmse_coeff = rmse(&c)?;
    }
    Ok(StudyReport {
        cells: reports,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Daily closing prices whose within-month correlation dissimilarities
/// `(1 − R)/2` reproduce `target` exactly (up to rounding).
///
/// Month `k` of the series becomes calendar month `k` counted from `start`,
/// with trading days on the 1st through the `days`-th. Each month requires
/// `R = 1 − 2 D(t_k)` to be positive semidefinite and `days > n`.
pub fn realizing_prices(
    target: &DissimilaritySeries,
    start: NaiveDate,
    days: usize,
    seed: u64,
) -> Result<Vec<(NaiveDate, String, f64)>> {
    let n = target.n();
    if days <= n || days > 28 {
        return Err(FmdsError::InvalidCount(format!(
            "need n < days <= 28 trading days, got {days} for n = {n}"
        )));
    }
    let tickers: Vec<String> = (0..n).map(|i| target.label_or_index(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(target.m() * days * n);
    for k in 0..target.m() {
        let r = DMatrix::from_element(n, n, 1.0) - target.matrix_at(k) * 2.0;
        let factor = covariance_factor(&r).map_err(|_| {
            FmdsError::InvalidValue(format!(
                "month {}: 1 − 2D is not a correlation matrix",
                k + 1
            ))
        })?;
        // orthonormal columns orthogonal to the all-ones vector
        let basis = loop {
            let mut g = DMatrix::from_fn(days, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            for mut col in g.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            if let Some(q) = crate::linalg::gram_schmidt(&g) {
                break q;
            }
        };
        let x = basis * factor.transpose();
        let month = start
            .checked_add_months(chrono::Months::new(k as u32))
            .ok_or_else(|| FmdsError::InvalidValue("date overflow".into()))?;
        for d in 0..days {
            let date = month.with_day(d as u32 + 1).expect("day <= 28");
            for (i, ticker) in tickers.iter().enumerate() {
                records.push((date, ticker.clone(), 100.0 + 10.0 * x[(d, i)]));
            }
        }
    }
    Ok(records)
}

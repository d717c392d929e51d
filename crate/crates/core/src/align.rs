//! Orthogonal alignment of a fitted coefficient set to a reference.
//!
//! The objective is the trapezoidal approximation, on the half-step grid
//! `t_k = 1 + (k − 1)/2`, `k = 1, …, 2m − 1`, of
//!
//! ```text
//! G(Γ) = Σ_i ∫_1^m ‖Γ Ĉ_i β(t) − C_i β(t)‖² dt
//! ```
//!
//! It is minimized over orthogonal `Γ` with a Cayley-transform curvilinear
//! search using Barzilai–Borwein steps and a nonmonotone backtracking rule.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::coeffs::CoeffSet;
use crate::error::{FmdsError, Result};
use crate::linalg::{det_sign, orthogonality_error, random_orthogonal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvilinearConfig {
    /// Sufficient-decrease parameter.
    pub rho1: f64,
    /// Backtracking shrink factor.
    pub delta: f64,
    /// Weight of the previous reference value in the nonmonotone average.
    pub eta: f64,
    /// Stop when `‖∇G‖_F <= epsilon`.
    pub epsilon: f64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub max_iters: usize,
    /// Backtracking attempts per iteration before the step is taken anyway.
    pub max_backtracks: usize,
    pub seed: u64,
    /// Also search the `det = −1` component from a reflected start.
    pub reflection_start: bool,
}

impl Default for CurvilinearConfig {
    fn default() -> Self {
        CurvilinearConfig {
            rho1: 1e-4,
            delta: 0.5,
            eta: 0.85,
            epsilon: 1e-5,
            tau0: 1e-3,
            tau_min: 1e-20,
            tau_max: 1e20,
            max_iters: 1000,
            max_backtracks: 60,
            seed: 0,
            reflection_start: true,
        }
    }
}

impl CurvilinearConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(unit(self.rho1) && unit(self.delta) && unit(self.eta) && unit(self.epsilon)) {
            return Err(FmdsError::InvalidValue(
                "rho1, delta, eta and epsilon must lie in (0, 1)".into(),
            ));
        }
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau0 && self.tau0 <= self.tau_max) {
            return Err(FmdsError::InvalidValue(
                "step bounds must satisfy 0 < tau_min <= tau0 <= tau_max".into(),
            ));
        }
        if self.max_iters < 1 {
            return Err(FmdsError::InvalidValue("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub objective: f64,
    pub grad_norm: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub gamma_hat: DMatrix<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
    /// Determinant sign of the winning start (and therefore of `gamma_hat`).
    pub det_sign: f64,
    /// Objective at the winning start.
    pub initial_objective: f64,
    /// Largest `‖ΓᵀΓ − I‖_F` over every iterate of every start.
    pub max_feasibility_error: f64,
    pub trace: Vec<TraceEntry>,
}

/// Basis-evaluated points and trapezoid weights for one alignment problem.
#[derive(Debug, Clone)]
pub struct AlignProblem {
    p: usize,
    /// `p × N` fitted points `Ĉ_i β(t_k)` over all objects and grid points.
    fitted: DMatrix<f64>,
    /// `p × N` reference points `C_i β(t_k)`.
    truth: DMatrix<f64>,
    weights: Vec<f64>,
}

impl AlignProblem {
    pub fn new(fitted: &CoeffSet, truth: &CoeffSet, spec: &BasisSpec, m: usize) -> Result<Self> {
        if fitted.shape() != truth.shape() {
            return Err(FmdsError::DimensionMismatch(format!(
                "fitted shape {:?} differs from reference shape {:?}",
                fitted.shape(),
                truth.shape()
            )));
        }
        if fitted.q() != spec.q() {
            return Err(FmdsError::DimensionMismatch(format!(
                "coefficients have q = {}, basis has q = {}",
                fitted.q(),
                spec.q()
            )));
        }
        if m < 2 {
            return Err(FmdsError::InvalidCount(format!(
                "time-period length m = {m} must be at least 2"
            )));
        }
        let grid: Vec<f64> = (0..2 * m - 1).map(|k| 1.0 + k as f64 / 2.0).collect();
        let basis = spec.on_grid(&grid)?;
        let (n, p, _) = fitted.shape();
        let cols = n * grid.len();
        let mut a = DMatrix::zeros(p, cols);
        let mut b = DMatrix::zeros(p, cols);
        let mut weights = Vec::with_capacity(cols);
        let last = grid.len() - 1;
        let mut buf = vec![0.0; p];
        for i in 0..n {
            for k in 0..grid.len() {
                let col = i * grid.len() + k;
                basis.apply(fitted.get(i), k, &mut buf);
                a.column_mut(col).copy_from_slice(&buf);
                basis.apply(truth.get(i), k, &mut buf);
                b.column_mut(col).copy_from_slice(&buf);
                weights.push(if k == 0 || k == last { 0.25 } else { 0.5 });
            }
        }
        Ok(AlignProblem {
            p,
            fitted: a,
            truth: b,
            weights,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn residual(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        gamma * &self.fitted - &self.truth
    }

    pub fn objective(&self, gamma: &DMatrix<f64>) -> f64 {
        let r = self.residual(gamma);
        r.column_iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.norm_squared())
            .sum()
    }

    /// Euclidean gradient `∂G/∂Γ`.
    pub fn gradient(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = self.residual(gamma);
        for (mut c, w) in r.column_iter_mut().zip(&self.weights) {
            c *= 2.0 * w;
        }
        r * self.fitted.transpose()
    }

    fn check_gamma(&self, gamma: &DMatrix<f64>) -> Result<()> {
        if gamma.shape() != (self.p, self.p) {
            return Err(FmdsError::DimensionMismatch(format!(
                "Γ is {:?}, expected {}×{}",
                gamma.shape(),
                self.p,
                self.p
            )));
        }
        Ok(())
    }
}

/// Trapezoidal alignment objective `G(Γ)`.
pub fn objective_g(
    gamma: &DMatrix<f64>,
    fitted: &CoeffSet,
    truth: &CoeffSet,
    spec: &BasisSpec,
    m: usize,
) -> Result<f64> {
    let prob = AlignProblem::new(fitted, truth, spec, m)?;
    prob.check_gamma(gamma)?;
    Ok(prob.objective(gamma))
}

/// Euclidean gradient of [`objective_g`]; valid for any square `Γ`.
pub fn gradient_g(
    gamma: &DMatrix<f64>,
    fitted: &CoeffSet,
    truth: &CoeffSet,
    spec: &BasisSpec,
    m: usize,
) -> Result<DMatrix<f64>> {
    let prob = AlignProblem::new(fitted, truth, spec, m)?;
    prob.check_gamma(gamma)?;
    Ok(prob.gradient(gamma))
}

/// `(∇G, A)` with `∇G = G − Γ Gᵀ Γ` and `A = G Γᵀ − Γ Gᵀ`.
pub fn riemannian_grad(
    gamma: &DMatrix<f64>,
    euclid: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let err = orthogonality_error(gamma);
    if err > 1e-8 {
        return Err(FmdsError::NonOrthogonal(err));
    }
    Ok(riemannian_parts(gamma, euclid))
}

fn riemannian_parts(gamma: &DMatrix<f64>, euclid: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let nabla = euclid - gamma * euclid.transpose() * gamma;
    let a = euclid * gamma.transpose() - gamma * euclid.transpose();
    (nabla, a)
}

/// Point `Γ(τ) = (I + τ/2 A)⁻¹ (I − τ/2 A) Γ` on the Cayley curve.
pub fn cayley_step(gamma: &DMatrix<f64>, a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    let p = gamma.nrows();
    let eye = DMatrix::<f64>::identity(p, p);
    let half = 0.5 * tau * a;
    let lhs = &eye + &half;
    let rhs = (&eye - &half) * gamma;
    let lu = lhs.lu();
    if lu.u().diagonal().iter().any(|d| d.abs() < 1e-14) {
        return Err(FmdsError::SingularSystem);
    }
    lu.solve(&rhs).ok_or(FmdsError::SingularSystem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BbType {
    /// `tr(SᵀS) / |tr(SᵀY)|`
    Type1,
    /// `|tr(SᵀY)| / tr(YᵀY)`
    Type2,
}

/// Unclamped BB step, or `None` when the selected denominator is zero.
pub fn bb_step_raw(s: &DMatrix<f64>, y: &DMatrix<f64>, mode: BbType) -> Option<f64> {
    let ss = s.dot(s);
    let sy = s.dot(y).abs();
    let yy = y.dot(y);
    let (num, den) = match mode {
        BbType::Type1 => (ss, sy),
        BbType::Type2 => (sy, yy),
    };
    (den > 0.0 && num.is_finite() && den.is_finite()).then(|| num / den)
}

/// BB step clamped to `[tau_min, tau_max]`; falls back to `tau0`.
pub fn bb_step(s: &DMatrix<f64>, y: &DMatrix<f64>, mode: BbType, config: &CurvilinearConfig) -> f64 {
    match bb_step_raw(s, y, mode) {
        Some(t) if t > 0.0 => t.clamp(config.tau_min, config.tau_max),
        _ => config.tau0,
    }
}

struct SearchOutcome {
    gamma: DMatrix<f64>,
    objective: f64,
    grad_norm: f64,
    iters: usize,
    converged: bool,
    initial_objective: f64,
    max_feasibility_error: f64,
    trace: Vec<TraceEntry>,
}

/// Curvilinear search from a single orthogonal start.
fn search(prob: &AlignProblem, start: DMatrix<f64>, config: &CurvilinearConfig) -> Result<SearchOutcome> {
    let mut x = start;
    let mut f = prob.objective(&x);
    let (mut nabla, mut a) = riemannian_parts(&x, &prob.gradient(&x));
    let mut gn = nabla.norm();
    let initial_objective = f;

    let mut best = (x.clone(), f, gn);
    let mut c_ref = f;
    let mut q_ref = 1.0;
    let mut tau = config.tau0;
    let mut max_feas = orthogonality_error(&x);
    let mut trace = vec![TraceEntry {
        objective: f,
        grad_norm: gn,
        tau: 0.0,
    }];
    let mut iters = 0;
    let mut converged = gn <= config.epsilon;

    while !converged && iters < config.max_iters {
        iters += 1;
        let slope = -0.5 * a.norm_squared();
        let mut trial = cayley_step(&x, &a, tau)?;
        let mut f_trial = prob.objective(&trial);
        let mut tries = 0;
        while f_trial > c_ref + config.rho1 * tau * slope && tries < config.max_backtracks {
            tau *= config.delta;
            trial = cayley_step(&x, &a, tau)?;
            f_trial = prob.objective(&trial);
            tries += 1;
        }
        let (nabla_new, a_new) = riemannian_parts(&trial, &prob.gradient(&trial));
        let s = &trial - &x;
        let y = &nabla_new - &nabla;

        let q_next = config.eta * q_ref + 1.0;
        c_ref = (config.eta * q_ref * c_ref + f_trial) / q_next;
        q_ref = q_next;

        x = trial;
        f = f_trial;
        nabla = nabla_new;
        a = a_new;
        gn = nabla.norm();
        max_feas = max_feas.max(orthogonality_error(&x));
        trace.push(TraceEntry {
            objective: f,
            grad_norm: gn,
            tau,
        });
        if f < best.1 || (f == best.1 && gn < best.2) {
            best = (x.clone(), f, gn);
        }
        converged = gn <= config.epsilon;

        let mode = if iters % 2 == 1 { BbType::Type1 } else { BbType::Type2 };
        tau = bb_step(&s, &y, mode, config);
    }

    Ok(SearchOutcome {
        gamma: best.0,
        objective: best.1,
        grad_norm: best.2,
        iters,
        converged,
        initial_objective,
        max_feasibility_error: max_feas,
        trace,
    })
}

/// Finds the orthogonal `Γ̂` minimizing [`objective_g`].
///
/// Starts are the identity, a seeded Gaussian matrix orthonormalized by
/// Gram–Schmidt (signed to `det = +1`), and, when `reflection_start` is set,
/// the same matrix with its last column negated (`det = −1`). The start with
/// the lowest final objective wins.
pub fn align(
    fitted: &CoeffSet,
    truth: &CoeffSet,
    spec: &BasisSpec,
    m: usize,
    config: &CurvilinearConfig,
) -> Result<AlignmentResult> {
    config.validate()?;
    let prob = AlignProblem::new(fitted, truth, spec, m)?;
    align_problem(&prob, config)
}

pub fn align_problem(prob: &AlignProblem, config: &CurvilinearConfig) -> Result<AlignmentResult> {
    let p = prob.p();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seeded = random_orthogonal(p, &mut rng);
    if det_sign(&seeded) < 0.0 {
        seeded.column_mut(p - 1).neg_mut();
    }
    let mut starts = vec![seeded.clone(), DMatrix::identity(p, p)];
    if config.reflection_start {
        let mut reflected = seeded;
        reflected.column_mut(p - 1).neg_mut();
        starts.push(reflected);
    }

    let mut winner: Option<SearchOutcome> = None;
    let mut max_feas: f64 = 0.0;
    let mut total_iters = 0;
    for start in starts {
        let out = search(prob, start, config)?;
        max_feas = max_feas.max(out.max_feasibility_error);
        total_iters += out.iters;
        if winner.as_ref().is_none_or(|w| out.objective < w.objective) {
            winner = Some(out);
        }
    }
    let w = winner.expect("at least one start");
    log::debug!(
        "alignment: G = {:.6e}, ‖∇G‖ = {:.3e}, {} iterations over all starts",
        w.objective,
        w.grad_norm,
        total_iters
    );
    Ok(AlignmentResult {
        det_sign: det_sign(&w.gamma),
        gamma_hat: w.gamma,
        objective: w.objective,
        grad_norm: w.grad_norm,
        iters: w.iters,
        converged: w.converged,
        initial_objective: w.initial_objective,
        max_feasibility_error: max_feas,
        trace: w.trace,
    })
}

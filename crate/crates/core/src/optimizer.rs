//! Target function, pairwise gradients, and the pairwise Adam fit.
//!
//! The target is
//!
//! ```text
//! F(C_1, …, C_n) = Σ_{i<j} Σ_k [d_ij²(t_k) − ‖C_i β(t_k) − C_j β(t_k)‖²]²
//! ```
//!
//! and `fit` minimizes it locally one pair `(h, j)` at a time. Object
//! indices in this module are zero-based.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, GridBasis};
use crate::coeffs::CoeffSet;
use crate::dissim::{pairs, DissimilaritySeries};
use crate::error::{FmdsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Learning rate.
    pub alpha: f64,
    /// Decay rate of the first-moment estimate.
    pub gamma1: f64,
    /// Decay rate of the second-moment estimate.
    pub gamma2: f64,
    /// Constant added to `sqrt(v̂)` before dividing.
    pub stability: f64,
    /// Threshold on the Frobenius change of a coefficient matrix, used both
    /// by the per-pair loop and by the sweep-level convergence monitor.
    pub epsilon: f64,
    pub max_sweeps: usize,
    /// Upper bound on Adam steps within one pair.
    pub pair_step_cap: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            alpha: 0.001,
            gamma1: 0.9,
            gamma2: 0.999,
            stability: 1e-8,
            epsilon: 0.00075,
            max_sweeps: 10,
            pair_step_cap: 10_000,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FmdsError::InvalidValue(format!("fit config: {what}")));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma1) || !(0.0..1.0).contains(&self.gamma2) {
            return bad("gamma1 and gamma2 must lie in [0, 1)");
        }
        if !(self.stability > 0.0) {
            return bad("stability constant must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.max_sweeps < 1 || self.pair_step_cap < 1 {
            return bad("max_sweeps and pair_step_cap must be at least 1");
        }
        Ok(())
    }
}

/// Adam moments for one `(h, j)` pair. Fresh (zero) for every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamPairState {
    pub m_h: DMatrix<f64>,
    pub v_h: DMatrix<f64>,
    pub m_j: DMatrix<f64>,
    pub v_j: DMatrix<f64>,
    pub step: u32,
}

impl AdamPairState {
    pub fn new(p: usize, q: usize) -> Self {
        AdamPairState {
            m_h: DMatrix::zeros(p, q),
            v_h: DMatrix::zeros(p, q),
            m_j: DMatrix::zeros(p, q),
            v_j: DMatrix::zeros(p, q),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coeffs: CoeffSet,
    pub initial_f: f64,
    pub final_f: f64,
    pub sweeps_used: usize,
    pub converged: bool,
    /// `F` after each sweep.
    pub loss_trace: Vec<f64>,
    /// Largest Frobenius change of any `C_i` over each sweep.
    pub change_trace: Vec<f64>,
    pub pair_steps: u64,
    /// Pairs whose loop stopped at `pair_step_cap`.
    pub capped_pairs: u64,
}

fn check_inputs(coeffs: &CoeffSet, series: &DissimilaritySeries, spec: &BasisSpec) -> Result<GridBasis> {
    if coeffs.n() != series.n() {
        return Err(FmdsError::DimensionMismatch(format!(
            "{} coefficient matrices for {} objects",
            coeffs.n(),
            series.n()
        )));
    }
    if coeffs.q() != spec.q() {
        return Err(FmdsError::DimensionMismatch(format!(
            "coefficients have q = {}, basis has q = {}",
            coeffs.q(),
            spec.q()
        )));
    }
    spec.on_grid(series.grid())
}

fn check_pair(h: usize, j: usize, n: usize) -> Result<()> {
    if h >= j || j >= n {
        return Err(FmdsError::IndexOutOfRange(format!(
            "pair ({h}, {j}) requires h < j < n = {n}"
        )));
    }
    Ok(())
}

/// `Δ_k = D β(t_k)` for a `p × q` difference matrix `D`, into `out`.
#[inline]
fn diff_at(basis: &GridBasis, diff: &[f64], p: usize, k: usize, out: &mut [f64]) {
    let (start, w) = basis.local(k);
    out.iter_mut().for_each(|x| *x = 0.0);
    for (r, &wr) in w.iter().enumerate() {
        let col = &diff[(start + r) * p..(start + r + 1) * p];
        for (o, &v) in out.iter_mut().zip(col) {
            *o += wr * v;
        }
    }
}

fn pair_loss_raw(
    c_h: &DMatrix<f64>,
    c_j: &DMatrix<f64>,
    d: &[f64],
    basis: &GridBasis,
    scratch: &mut Vec<f64>,
) -> f64 {
    let p = c_h.nrows();
    let diff = c_h - c_j;
    scratch.resize(p, 0.0);
    let mut total = 0.0;
    for (k, &dk) in d.iter().enumerate() {
        diff_at(basis, diff.as_slice(), p, k, scratch);
        let sq: f64 = scratch.iter().map(|x| x * x).sum();
        let res = dk * dk - sq;
        total += res * res;
    }
    total
}

/// Residuals `d² − ‖Δ‖²` at or below this fraction of `max(d², ‖Δ‖²)` are
/// rounding noise and contribute no gradient. Without the floor, Adam's
/// normalized first step turns noise-level gradients into moves of size `α`.
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Gradient with respect to `C_h`; the gradient with respect to `C_j` is its
/// negative. `d2` holds the squared dissimilarities of the pair.
fn pair_grad_raw(
    diff: &[f64],
    p: usize,
    d2: &[f64],
    basis: &GridBasis,
    delta: &mut [f64],
    grad: &mut [f64],
) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (k, &dk2) in d2.iter().enumerate() {
        diff_at(basis, diff, p, k, delta);
        let sq: f64 = delta.iter().map(|x| x * x).sum();
        let res = dk2 - sq;
        if res.abs() <= RESIDUAL_FLOOR * dk2.max(sq) {
            continue;
        }
        let coef = -4.0 * res;
        let (start, w) = basis.local(k);
        for (r, &wr) in w.iter().enumerate() {
            let col = &mut grad[(start + r) * p..(start + r + 1) * p];
            for (g, &dv) in col.iter_mut().zip(delta.iter()) {
                *g += coef * wr * dv;
            }
        }
    }
}

/// Target function `F` over all pairs.
pub fn target_f(coeffs: &CoeffSet, series: &DissimilaritySeries, spec: &BasisSpec) -> Result<f64> {
    let basis = check_inputs(coeffs, series, spec)?;
    Ok(target_f_on(coeffs, series, &basis))
}

fn target_f_on(coeffs: &CoeffSet, series: &DissimilaritySeries, basis: &GridBasis) -> f64 {
    let mut scratch = Vec::new();
    pairs(series.n())
        .map(|(i, j)| {
            pair_loss_raw(
                coeffs.get(i),
                coeffs.get(j),
                series.pair_values(i, j),
                basis,
                &mut scratch,
            )
        })
        .sum()
}

/// Pair sub-function `f(C_h, C_j)`, for zero-based `h < j`.
pub fn pair_loss(
    h: usize,
    j: usize,
    coeffs: &CoeffSet,
    series: &DissimilaritySeries,
    spec: &BasisSpec,
) -> Result<f64> {
    check_pair(h, j, coeffs.n())?;
    let basis = check_inputs(coeffs, series, spec)?;
    Ok(pair_loss_raw(
        coeffs.get(h),
        coeffs.get(j),
        series.pair_values(h, j),
        &basis,
        &mut Vec::new(),
    ))
}

/// `(∂f/∂C_h, ∂f/∂C_j)` for zero-based `h < j`.
pub fn pair_gradients(
    h: usize,
    j: usize,
    coeffs: &CoeffSet,
    series: &DissimilaritySeries,
    spec: &BasisSpec,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_pair(h, j, coeffs.n())?;
    let basis = check_inputs(coeffs, series, spec)?;
    let (p, q) = (coeffs.p(), coeffs.q());
    let diff = coeffs.get(h) - coeffs.get(j);
    let d2: Vec<f64> = series.pair_values(h, j).iter().map(|d| d * d).collect();
    let mut delta = vec![0.0; p];
    let mut g = DMatrix::zeros(p, q);
    pair_grad_raw(diff.as_slice(), p, &d2, &basis, &mut delta, g.as_mut_slice());
    let neg = -&g;
    Ok((g, neg))
}

/// Applies one Adam update to both matrices of a pair.
///
/// Returns the Frobenius norms of the changes to `c_h` and `c_j`.
pub fn adam_pair_step(
    state: &mut AdamPairState,
    grad_h: &DMatrix<f64>,
    grad_j: &DMatrix<f64>,
    config: &FitConfig,
    c_h: &mut DMatrix<f64>,
    c_j: &mut DMatrix<f64>,
) -> (f64, f64) {
    let t = state.step as i32 + 1;
    let bc1 = 1.0 - config.gamma1.powi(t);
    let bc2 = 1.0 - config.gamma2.powi(t);
    let dh = adam_update(
        &mut state.m_h,
        &mut state.v_h,
        grad_h,
        c_h,
        config,
        bc1,
        bc2,
    );
    let dj = adam_update(
        &mut state.m_j,
        &mut state.v_j,
        grad_j,
        c_j,
        config,
        bc1,
        bc2,
    );
    state.step += 1;
    (dh, dj)
}

fn adam_update(
    m: &mut DMatrix<f64>,
    v: &mut DMatrix<f64>,
    g: &DMatrix<f64>,
    c: &mut DMatrix<f64>,
    config: &FitConfig,
    bc1: f64,
    bc2: f64,
) -> f64 {
    let (g1, g2) = (config.gamma1, config.gamma2);
    let mut change = 0.0;
    for (((mi, vi), &gi), ci) in m
        .iter_mut()
        .zip(v.iter_mut())
        .zip(g.iter())
        .zip(c.iter_mut())
    {
        *mi = g1 * *mi + (1.0 - g1) * gi;
        *vi = g2 * *vi + (1.0 - g2) * gi * gi;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        let step = config.alpha * m_hat / (v_hat.sqrt() + config.stability);
        *ci -= step;
        change += step * step;
    }
    change.sqrt()
}

/// Reusable buffers for the per-pair loop.
///
/// Inside one pair the gradients are exact negatives of each other, so from
/// zero moments `m_j = −m_h` and `v_j = v_h` hold bitwise at every step and
/// the update of `C_j` is the negated update of `C_h`. Only `C_h`'s moments
/// are stored; [`adam_pair_step`] is the general two-matrix form.
struct PairWorkspace {
    m: Vec<f64>,
    v: Vec<f64>,
    grad: Vec<f64>,
    diff: Vec<f64>,
    delta: Vec<f64>,
    d2: Vec<f64>,
}

impl PairWorkspace {
    fn new(p: usize, q: usize) -> Self {
        PairWorkspace {
            m: vec![0.0; p * q],
            v: vec![0.0; p * q],
            grad: vec![0.0; p * q],
            diff: vec![0.0; p * q],
            delta: vec![0.0; p],
            d2: Vec::new(),
        }
    }

    /// Runs Adam on pair `(h, j)` from zero moments until one of the two
    /// coefficient changes drops below epsilon. Returns (steps, capped).
    fn run(
        &mut self,
        coeffs: &mut CoeffSet,
        h: usize,
        j: usize,
        series: &DissimilaritySeries,
        basis: &GridBasis,
        config: &FitConfig,
    ) -> (usize, bool) {
        let p = coeffs.p();
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.d2.clear();
        self.d2.extend(series.pair_values(h, j).iter().map(|d| d * d));
        let (c_h, c_j) = coeffs.pair_mut(h, j);
        let (c_h, c_j) = (c_h.as_mut_slice(), c_j.as_mut_slice());
        let (g1, g2) = (config.gamma1, config.gamma2);
        let mut steps = 0usize;
        loop {
            for ((d, a), b) in self.diff.iter_mut().zip(c_h.iter()).zip(c_j.iter()) {
                *d = a - b;
            }
            pair_grad_raw(&self.diff, p, &self.d2, basis, &mut self.delta, &mut self.grad);
            let t = steps as i32 + 1;
            let bc1 = 1.0 - g1.powi(t);
            let bc2 = 1.0 - g2.powi(t);
            let mut change = 0.0;
            for k in 0..self.grad.len() {
                let gk = self.grad[k];
                self.m[k] = g1 * self.m[k] + (1.0 - g1) * gk;
                self.v[k] = g2 * self.v[k] + (1.0 - g2) * gk * gk;
                let step = config.alpha * (self.m[k] / bc1) / ((self.v[k] / bc2).sqrt() + config.stability);
                c_h[k] -= step;
                c_j[k] += step;
                change += step * step;
            }
            steps += 1;
            if change.sqrt() < config.epsilon {
                return (steps, false);
            }
            if steps >= config.pair_step_cap {
                log::warn!(
                    "pair ({}, {}) hit the step cap of {}",
                    h + 1,
                    j + 1,
                    config.pair_step_cap
                );
                return (steps, true);
            }
        }
    }
}

/// Fits the coefficient matrices by pairwise Adam, starting from `init`.
///
/// One sweep samples `n − 1` indices `h` uniformly from `{0, …, n − 2}`;
/// each sampled `h` updates the pairs `(h, h+1), …, (h, n−1)` in order, each
/// pair with fresh Adam moments. The fit converges when no coefficient
/// matrix moved by `epsilon` or more (Frobenius) over a whole sweep.
pub fn fit(
    series: &DissimilaritySeries,
    spec: &BasisSpec,
    config: &FitConfig,
    init: &CoeffSet,
) -> Result<FitResult> {
    config.validate()?;
    let basis = check_inputs(init, series, spec)?;
    let n = init.n();
    let (p, q) = (init.p(), init.q());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut coeffs = init.clone();
    let mut ws = PairWorkspace::new(p, q);
    let initial_f = target_f_on(&coeffs, series, &basis);

    let mut loss_trace = Vec::new();
    let mut change_trace = Vec::new();
    let mut pair_steps = 0u64;
    let mut capped_pairs = 0u64;
    let mut converged = false;
    let started = Instant::now();

    for sweep in 1..=config.max_sweeps {
        let before = coeffs.clone();
        for _ in 0..n - 1 {
            let h = rng.random_range(0..n - 1);
            for j in h + 1..n {
                let (steps, capped) = ws.run(&mut coeffs, h, j, series, &basis, config);
                pair_steps += steps as u64;
                capped_pairs += capped as u64;
            }
        }
        let change = coeffs.max_change(&before);
        let f = target_f_on(&coeffs, series, &basis);
        log::debug!("sweep {sweep}: F = {f:.6e}, max change = {change:.3e}");
        loss_trace.push(f);
        change_trace.push(change);
        if change < config.epsilon {
            converged = true;
            break;
        }
    }
    log::debug!(
        "fit finished in {:.2?}: {} sweeps, {} pair steps",
        started.elapsed(),
        loss_trace.len(),
        pair_steps
    );

    Ok(FitResult {
        final_f: *loss_trace.last().expect("at least one sweep"),
        sweeps_used: loss_trace.len(),
        coeffs,
        initial_f,
        converged,
        loss_trace,
        change_trace,
        pair_steps,
        capped_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissim::euclidean_series;

    fn random_instance(n: usize, p: usize, l: usize, m: usize, seed: u64) -> (CoeffSet, DissimilaritySeries, BasisSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = BasisSpec::new(l, 1.0, m.max(2) as f64).unwrap();
        let q = spec.q();
        let coeffs = CoeffSet::new(
            (0..n)
                .map(|_| DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.5..1.5)))
                .collect(),
        )
        .unwrap();
        let grid: Vec<f64> = (1..=m).map(|k| k as f64).collect();
        let values: Vec<f64> = (0..n * (n - 1) / 2 * m).map(|_| rng.random_range(0.0..3.0)).collect();
        let series = DissimilaritySeries::new(n, grid, values).unwrap();
        (coeffs, series, spec)
    }

    /// Double loop straight from the definition, using dense basis vectors.
    fn naive_f(coeffs: &CoeffSet, series: &DissimilaritySeries, spec: &BasisSpec) -> f64 {
        let mut total = 0.0;
        for i in 0..coeffs.n() {
            for j in i + 1..coeffs.n() {
                for (k, &t) in series.grid().iter().enumerate() {
                    let b = nalgebra::DVector::from_vec(spec.eval(t).unwrap());
                    let xi = coeffs.get(i) * &b;
                    let xj = coeffs.get(j) * &b;
                    let diff = xi - xj;
                    let r = series.get(i, j, k).powi(2) - diff.dot(&diff);
                    total += r * r;
                }
            }
        }
        total
    }

    #[test]
    fn target_matches_naive_and_pair_sum() {
        for seed in 0..5 {
            let (c, s, spec) = random_instance(3, 2, 1, 2, seed);
            let f = target_f(&c, &s, &spec).unwrap();
            let oracle = naive_f(&c, &s, &spec);
            assert!((f - oracle).abs() <= 1e-12 * oracle.max(1.0));
            let sum: f64 = pairs(3).map(|(i, j)| pair_loss(i, j, &c, &s, &spec).unwrap()).sum();
            assert!((f - sum).abs() <= 1e-12 * f.max(1.0));
        }
        let (c, s, spec) = random_instance(2, 2, 5, 15, 9);
        assert_eq!(
            pair_loss(0, 1, &c, &s, &spec).unwrap(),
            target_f(&c, &s, &spec).unwrap()
        );
    }

    #[test]
    fn zero_configuration() {
        let spec = BasisSpec::new(5, 1.0, 10.0).unwrap();
        let c = CoeffSet::new(vec![DMatrix::from_element(2, 9, 0.4); 4]).unwrap();
        let s = DissimilaritySeries::new(4, (1..=10).map(|k| k as f64).collect(), vec![0.0; 60]).unwrap();
        assert_eq!(target_f(&c, &s, &spec).unwrap(), 0.0);
        assert_eq!(pair_loss(1, 3, &c, &s, &spec).unwrap(), 0.0);
        let (gh, gj) = pair_gradients(0, 2, &c, &s, &spec).unwrap();
        assert_eq!(gh.amax(), 0.0);
        assert_eq!(gj.amax(), 0.0);
    }

    #[test]
    fn exact_embedding_has_zero_target() {
        let (truth, _, spec) = random_instance(6, 2, 5, 15, 3);
        let s = euclidean_series(&truth, &spec, &(1..=15).map(|k| k as f64).collect::<Vec<_>>()).unwrap();
        let f = target_f(&truth, &s, &spec).unwrap();
        let scale: f64 = s.values().iter().map(|d| d.powi(4)).sum();
        assert!(f <= 1e-16 * scale, "F = {f}");
    }

    #[test]
    fn index_errors() {
        let (c, s, spec) = random_instance(3, 2, 1, 2, 0);
        assert!(matches!(pair_loss(1, 1, &c, &s, &spec), Err(FmdsError::IndexOutOfRange(_))));
        assert!(matches!(pair_gradients(2, 1, &c, &s, &spec), Err(FmdsError::IndexOutOfRange(_))));
        assert!(matches!(pair_gradients(0, 3, &c, &s, &spec), Err(FmdsError::IndexOutOfRange(_))));
        let bad = CoeffSet::zeros(4, 2, 5);
        assert!(matches!(target_f(&bad, &s, &spec), Err(FmdsError::DimensionMismatch(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let (c, s, spec) = random_instance(4, 2, 3, 8, 100 + seed);
            let (gh, gj) = pair_gradients(1, 3, &c, &s, &spec).unwrap();
            assert_eq!(&gh + &gj, DMatrix::zeros(2, spec.q()));
            for (which, g) in [(1usize, &gh), (3usize, &gj)] {
                for idx in 0..g.len() {
                    let step = 1e-6;
                    let mut plus = c.clone();
                    plus.get_mut(which).as_mut_slice()[idx] += step;
                    let mut minus = c.clone();
                    minus.get_mut(which).as_mut_slice()[idx] -= step;
                    let fd = (pair_loss(1, 3, &plus, &s, &spec).unwrap()
                        - pair_loss(1, 3, &minus, &s, &spec).unwrap())
                        / (2.0 * step);
                    let an = g.as_slice()[idx];
                    let rel = (fd - an).abs() / an.abs().max(1e-3);
                    assert!(rel <= 1e-5, "seed {seed} idx {idx}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let cfg = FitConfig::default();
        let mut st = AdamPairState::new(2, 3);
        let mut ch = DMatrix::from_element(2, 3, 1.0);
        let mut cj = DMatrix::from_element(2, 3, -1.0);
        let z = DMatrix::zeros(2, 3);
        let (dh, dj) = adam_pair_step(&mut st, &z, &z, &cfg, &mut ch, &mut cj);
        assert_eq!((dh, dj), (0.0, 0.0));
        assert_eq!(ch, DMatrix::from_element(2, 3, 1.0));
        assert_eq!(st.m_h.amax() + st.v_h.amax(), 0.0);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_hand_expansion() {
        // i = 0: m = 0.1 g, v = 0.001 g², m̂ = g, v̂ = g², step = α g / (|g| + e)
        let cfg = FitConfig::default();
        let mut st = AdamPairState::new(1, 3);
        let g = DMatrix::from_row_slice(1, 3, &[2.0, -0.5, 1e-9]);
        let mut ch = DMatrix::zeros(1, 3);
        let mut cj = DMatrix::zeros(1, 3);
        adam_pair_step(&mut st, &g, &(-&g), &cfg, &mut ch, &mut cj);
        for (k, &gk) in g.iter().enumerate() {
            let expect = -0.001 * gk / (gk.abs() + 1e-8);
            assert!((ch[k] - expect).abs() < 1e-15, "{} vs {expect}", ch[k]);
            assert!((cj[k] + expect).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_two_step_trace() {
        let cfg = FitConfig::default();
        let mut st = AdamPairState::new(1, 1);
        let mut ch = DMatrix::from_element(1, 1, 0.5);
        let mut cj = DMatrix::from_element(1, 1, 0.0);
        let g1 = DMatrix::from_element(1, 1, 3.0);
        let g2 = DMatrix::from_element(1, 1, -1.0);
        adam_pair_step(&mut st, &g1, &g1, &cfg, &mut ch, &mut cj);
        adam_pair_step(&mut st, &g2, &g2, &cfg, &mut ch, &mut cj);
        // step 1: m = 0.3, v = 0.009, m̂ = 3, v̂ = 9, Δ = 0.001*3/(3+1e-8)
        let c1 = 0.5 - 0.001 * 3.0 / (3.0 + 1e-8);
        // step 2: m = 0.27 - 0.1 = 0.17, v = 0.008991 + 0.001 = 0.009991
        // m̂ = 0.17/0.19, v̂ = 0.009991/0.001999
        let m_hat = 0.17 / (1.0 - 0.81);
        let v_hat: f64 = 0.009991 / (1.0 - 0.998001);
        let c2 = c1 - 0.001 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((ch[0] - c2).abs() < 1e-12, "{} vs {c2}", ch[0]);
        assert_eq!(st.step, 2);
    }

    #[test]
    fn fit_from_truth_is_stationary() {
        let (truth, _, spec) = random_instance(6, 2, 5, 15, 1);
        let s = euclidean_series(&truth, &spec, &(1..=15).map(|k| k as f64).collect::<Vec<_>>()).unwrap();
        let res = fit(&s, &spec, &FitConfig::default(), &truth).unwrap();
        assert!(res.converged);
        assert_eq!(res.sweeps_used, 1);
        assert!(res.change_trace[0] < 1e-6);
    }

    #[test]
    fn fit_matches_general_adam_steps() {
        // reference loop built from the public two-matrix step
        let (truth, series, spec) = random_instance(5, 2, 2, 8, 41);
        let init = CoeffSet::new(truth.mats().iter().map(|c| c * 0.7 + DMatrix::from_element(2, 6, 0.1)).collect()).unwrap();
        let config = FitConfig { max_sweeps: 2, seed: 3, ..FitConfig::default() };
        let fitted = fit(&series, &spec, &config, &init).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut coeffs = init.clone();
        for _ in 0..2 {
            for _ in 0..4 {
                let h = rng.random_range(0..4);
                for j in h + 1..5 {
                    let mut st = AdamPairState::new(2, 6);
                    loop {
                        let (gh, gj) = pair_gradients(h, j, &coeffs, &series, &spec).unwrap();
                        let (ch, cj) = coeffs.pair_mut(h, j);
                        let (dh, dj) = adam_pair_step(&mut st, &gh, &gj, &config, ch, cj);
                        if dh < config.epsilon || dj < config.epsilon || st.step as usize >= config.pair_step_cap {
                            break;
                        }
                    }
                }
            }
        }
        assert_eq!(fitted.coeffs, coeffs);
    }

    #[test]
    fn fit_rejects_bad_config() {
        let (c, s, spec) = random_instance(3, 2, 1, 2, 0);
        let cfg = FitConfig { gamma1: 1.0, ..FitConfig::default() };
        assert!(fit(&s, &spec, &cfg, &c).is_err());
        let cfg = FitConfig { max_sweeps: 0, ..FitConfig::default() };
        assert!(fit(&s, &spec, &cfg, &c).is_err());
    }

    mod props {
        use super::*;
        use crate::linalg::random_orthogonal;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn target_invariances(seed in 0u64..10_000) {
                let (c, s, spec) = random_instance(5, 3, 2, 6, seed);
                let f = target_f(&c, &s, &spec).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                let gamma = random_orthogonal(3, &mut rng);
                let rotated = target_f(&c.transformed(&gamma), &s, &spec).unwrap();
                prop_assert!((rotated - f).abs() <= 1e-9 * f.max(1.0));
                let k = DMatrix::from_fn(3, spec.q(), |_, _| rng.random_range(-5.0..5.0));
                let shifted = target_f(&c.translated(&k), &s, &spec).unwrap();
                prop_assert!((shifted - f).abs() <= 1e-9 * f.max(1.0));
            }
        }
    }
}

//! Small dense linear-algebra helpers shared by the initializer and the
//! alignment search.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Modified Gram–Schmidt on the columns of a matrix with at least as many
/// rows as columns.
///
/// Returns `None` when the columns are numerically dependent.
pub fn gram_schmidt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            q.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let norm = q.column(j).norm();
        if norm < 1e-12 {
            return None;
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    // second pass restores orthogonality lost to cancellation
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            q.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    Some(q)
}

/// Gaussian matrix orthonormalized by Gram–Schmidt, redrawn on failure.
pub fn random_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Some(q) = gram_schmidt(&g) {
            return q;
        }
    }
}

/// `‖ΓᵀΓ − I‖_F`.
pub fn orthogonality_error(gamma: &DMatrix<f64>) -> f64 {
    let p = gamma.ncols();
    (gamma.transpose() * gamma - DMatrix::<f64>::identity(p, p)).norm()
}

/// Orthogonal `R` minimizing `‖R·source − target‖_F` for `p × N` point sets.
pub fn procrustes_rotation(source: &DMatrix<f64>, target: &DMatrix<f64>) -> DMatrix<f64> {
    let m = target * source.transpose();
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    u * v_t
}

/// Sign of the determinant of a square matrix (0 when singular).
pub fn det_sign(a: &DMatrix<f64>) -> f64 {
    let d = a.clone().lu().determinant();
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

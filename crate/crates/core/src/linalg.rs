//! Small dense linear algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Option<Chol> {
    if m.nrows() != m.ncols() || m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Cholesky::new(symmetrize(m))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= rel_tol * scale))
}

/// `ln |A|` from a Cholesky factor of `A`.
pub fn chol_logdet(c: &Chol) -> f64 {
    let l = c.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    cholesky(m).map(|c| symmetrize(&c.inverse()))
}

/// Ratio of largest to smallest eigenvalue magnitude of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Outcome of a jittered factorisation.
#[derive(Debug, Clone)]
pub struct RobustChol {
    pub chol: Chol,
    /// Diagonal jitter added before factorisation (0 if none was needed).
    pub jitter: f64,
    pub condition_number: f64,
}

/// Factorises a covariance matrix, adding diagonal jitter `1e-10·tr/k`
/// escalated ×10 up to three times if the plain factorisation fails.
/// Fails if the matrix has condition number ≥ `max_condition` or no
/// attempt succeeds.
pub fn robust_cholesky(m: &DMatrix<f64>, max_condition: f64) -> Option<RobustChol> {
    let k = m.nrows();
    let cond = condition_number(m);
    if !(cond < max_condition) {
        return None;
    }
    let base = 1e-10 * m.trace() / k as f64;
    let mut jitter = 0.0;
    for attempt in 0..=3 {
        if attempt > 0 {
            jitter = base * 10f64.powi(attempt - 1);
        }
        let a = m + DMatrix::identity(k, k) * jitter;
        if let Some(chol) = cholesky(&a) {
            return Some(RobustChol { chol, jitter, condition_number: cond });
        }
    }
    None
}

/// Solves `L x = b` for lower-triangular `L`, in place order.
pub fn forward_substitute(l: &DMatrix<f64>, b: &[f64], out: &mut [f64]) {
    for i in 0..b.len() {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * out[j];
        }
        out[i] = s / l[(i, i)];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logdet_and_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let c = cholesky(&m).unwrap();
        assert_relative_eq!(chol_logdet(&c), 11f64.ln(), max_relative = 1e-14);
        let inv = spd_inverse(&m).unwrap();
        assert_relative_eq!((&m * &inv), DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(robust_cholesky(&m, 1e12).is_none());
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-6]);
        let r = robust_cholesky(&near, 1e12).unwrap();
        assert_eq!(r.jitter, 0.0);
        assert_relative_eq!(r.condition_number, 1e6, max_relative = 1e-9);
    }

    #[test]
    fn forward_substitution_solves_triangle() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 3.0]);
        let mut x = [0.0; 2];
        forward_substitute(&l, &[4.0, 11.0], &mut x);
        assert_eq!(x, [2.0, 3.0]);
    }
}

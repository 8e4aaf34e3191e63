//! Small dense kernels: singular values by one-sided Jacobi rotations,
//! operator norms and column orthonormalization.
//!
//! Every matrix in this crate is at most `d × d` with `d` in the single
//! digits, so the kernels favour robustness over asymptotic speed.

use nalgebra::{DMatrix, DVector};

/// Relative off-diagonal tolerance for the Jacobi sweeps.
pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 60;

/// Singular values of `a`, sorted in decreasing order.
///
/// One-sided (Hestenes) Jacobi: columns are rotated pairwise until they are
/// mutually orthogonal to [`JACOBI_TOL`]; the singular values are then the
/// column norms. Wide matrices are transposed first.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut u = if a.ncols() > a.nrows() {
        a.transpose()
    } else {
        a.clone()
    };
    let (m, n) = u.shape();
    if n == 0 {
        return Vec::new();
    }
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for k in 0..m {
                    let up = u[(k, p)];
                    let uq = u[(k, q)];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let up = u[(k, p)];
                    let uq = u[(k, q)];
                    u[(k, p)] = c * up - s * uq;
                    u[(k, q)] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Operator norm `|A|` (largest singular value).
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Co-norm `|A^{-1}|^{-1}` (smallest singular value of a square matrix).
pub fn co_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Largest and smallest singular value in one pass.
pub fn norm_pair(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = singular_values(a);
    (
        sv.first().copied().unwrap_or(0.0),
        sv.last().copied().unwrap_or(0.0),
    )
}

/// Orthonormalizes the columns of `m` by modified Gram–Schmidt with one
/// re-orthogonalization pass. Returns `None` if a column collapses below
/// `rel_tol` times the largest input column norm.
pub fn orthonormalize_columns(m: &DMatrix<f64>, rel_tol: f64) -> Option<DMatrix<f64>> {
    let scale = (0..m.ncols())
        .map(|j| m.column(j).norm())
        .fold(0.0_f64, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for _pass in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dot(&q.column(j));
                let qk = q.column(k).clone_owned();
                q.column_mut(j).axpy(-proj, &qk, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if norm <= rel_tol * scale {
            return None;
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    Some(q)
}

/// Euclidean distance between two points.
pub fn dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_matrix_values() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 3.0, 0.25]));
        let sv = singular_values(&a);
        assert!((sv[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((sv[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let sv = singular_values(&a);
        assert!((sv[0] - 2.0).abs() < 1e-14);
        assert!(sv[1].abs() < 1e-14);
    }

    #[test]
    fn wide_matrix_uses_transpose() {
        let a = DMatrix::from_row_slice(1, 3, &[3.0, 0.0, 4.0]);
        assert_eq!(singular_values(&a).len(), 1);
        assert!((op_norm(&a) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn orthonormalize_rejects_dependent_columns() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(orthonormalize_columns(&m, 1e-12).is_none());
    }

    fn square(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0..2.0f64, d * d)
            .prop_map(move |v| DMatrix::from_row_slice(d, d, &v))
    }

    proptest! {
        // nalgebra's Golub–Kahan SVD is an independent route to the same values.
        #[test]
        fn jacobi_matches_nalgebra_svd(a in (1usize..=6).prop_flat_map(square)) {
            let ours = singular_values(&a);
            let mut theirs: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
            theirs.sort_by(|x, y| y.total_cmp(x));
            for (x, y) in ours.iter().zip(theirs.iter()) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn orthonormal_output(a in (2usize..=5).prop_flat_map(square)) {
            if let Some(q) = orthonormalize_columns(&a, 1e-9) {
                let gram = q.transpose() * &q;
                let id = DMatrix::<f64>::identity(q.ncols(), q.ncols());
                prop_assert!((gram - id).amax() < 1e-12);
            }
        }
    }
}

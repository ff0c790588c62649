//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff for pseudo-inverses.
pub const PINV_RTOL: f64 = 1e-12;

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * PINV_RTOL).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).expect("u and v were computed")
}

/// Moore-Penrose pseudo-inverse and whether `a` was rank deficient.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = a.nrows().min(a.ncols());
    if n == 0 {
        return (DMatrix::zeros(a.ncols(), a.nrows()), true);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * PINV_RTOL).max(f64::MIN_POSITIVE);
    let deficient = svd.singular_values.iter().any(|s| *s <= eps);
    let pinv = svd.pseudo_inverse(eps).expect("u and v were computed");
    (pinv, deficient)
}

/// Ratio of extreme eigenvalues of a symmetric matrix (infinite if not PD).
pub fn condition_number(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 1.0;
    }
    let eig = sym.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_norm_solution_of_underdetermined_system() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let x = lstsq_min_norm(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_flags_rank_deficiency() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let (_, deficient) = pseudo_inverse(&a);
        assert!(deficient);
        let (inv, deficient) = pseudo_inverse(&DMatrix::identity(3, 3));
        assert!(!deficient);
        assert_eq!(inv, DMatrix::identity(3, 3));
    }
}

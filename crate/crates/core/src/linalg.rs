//! Small dense linear algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue cutoff for pseudo-inverses.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Symmetric eigendecomposition-based pseudo-inverse.
///
/// Eigenvalues below `PINV_CUTOFF` times the largest eigenvalue are treated
/// as zero. The input is symmetrized first so that accumulated asymmetry in
/// the caller's matrix does not leak into the decomposition.
pub fn sym_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = PINV_CUTOFF * max_ev;
    let mut inv_vals = eig.eigenvalues.clone();
    for v in inv_vals.iter_mut() {
        *v = if v.abs() > cut { 1.0 / *v } else { 0.0 };
    }
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&inv_vals) * q.transpose()
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Upper-triangular factor `L` with `LᵀL = m` for symmetric positive
/// definite `m` (the transpose of the usual lower Cholesky factor).
pub fn cholesky_upper(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    symmetrize(m).cholesky().map(|c| c.l().transpose())
}

/// Orthonormal basis of the column space of `m`, via thin SVD.
pub fn column_space_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let max_sv = svd.singular_values.iter().fold(0.0f64, |a, &v| a.max(v));
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > rel_tol * max_sv.max(1e-300))
        .count();
    u.columns(0, rank).into_owned()
}

/// Orthonormal basis of the null space of `m`, from the eigenvectors of
/// `mᵀm` with negligible eigenvalue (nalgebra's SVD is thin, so the right
/// singular vectors alone cannot produce the null space of a wide matrix).
/// `rel_tol` is the relative eigenvalue cutoff of `mᵀm`.
pub fn null_space_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let ncols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    let gram = m.transpose() * m;
    let eig = symmetrize(&gram).symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = rel_tol * max_ev.max(1e-300);
    let idx: Vec<usize> = (0..ncols)
        .filter(|&k| eig.eigenvalues[k].abs() <= cut)
        .collect();
    let mut basis = DMatrix::zeros(ncols, idx.len());
    for (col, &k) in idx.iter().enumerate() {
        basis.set_column(col, &eig.eigenvectors.column(k));
    }
    basis
}

/// Least-squares solve `argmin ‖a x − b‖` via SVD pseudo-inverse.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, PINV_CUTOFF).expect("svd solve")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_recovers_inverse_on_spd() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let p = sym_pinv(&m);
        let id = &m * &p;
        assert_relative_eq!(id[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(id[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(id[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pinv_drops_null_directions() {
        // rank-1 matrix vvᵀ with v = (1, 1): pinv = vvᵀ / |v|⁴
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = sym_pinv(&m);
        assert_relative_eq!(p[(0, 0)], 0.25, epsilon = 1e-12);
        assert_relative_eq!(p[(0, 1)], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_upper_reproduces_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = cholesky_upper(&m).unwrap();
        let back = l.transpose() * &l;
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(back[(i, j)], m[(i, j)], epsilon = 1e-12);
            }
        }
        // upper triangular
        assert_eq!(l[(1, 0)], 0.0);
        assert_eq!(l[(2, 0)], 0.0);
        assert_eq!(l[(2, 1)], 0.0);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let ns = null_space_basis(&m, 1e-12);
        assert_eq!(ns.ncols(), 2);
        let prod = &m * &ns;
        assert!(prod.amax() < 1e-12);
    }
}

//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower Cholesky factor. When the plain factorization fails, retries with a
/// diagonal jitter scaled to the matrix (up to `1e-10 * mean diagonal`),
/// which absorbs round-off in nearly singular PSD blocks.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    if let Some(c) = a.clone().cholesky() {
        return Some(c.l());
    }
    let scale = a.diagonal().iter().map(|v| v.abs()).sum::<f64>() / a.nrows() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    for exp in [-14, -12, -10] {
        let mut b = a.clone();
        let eps = scale * 10f64.powi(exp);
        for i in 0..b.nrows() {
            b[(i, i)] += eps;
        }
        if let Some(c) = b.cholesky() {
            return Some(c.l());
        }
    }
    None
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

/// Column means of a row-per-observation matrix.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Unbiased sample covariance (divisor `n - 1`; `n` when only one row).
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = column_means(x);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = if x.nrows() > 1 {
        (x.nrows() - 1) as f64
    } else {
        1.0
    };
    let cov = centered.transpose() * &centered / denom;
    // exact symmetry
    (&cov + cov.transpose()) * 0.5
}

pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Solves the symmetric system `a x = b`. Cholesky first; if that fails or its
/// pivots show numerical rank loss, falls back to column-pivoted QR and
/// reports a singular system when the pivoted diagonal collapses.
pub fn solve_spd_or_pivoted(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    const RANK_TOL: f64 = 1e-13;
    if let Some(chol) = a.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let max = diag.iter().fold(0.0f64, |m, v| m.max(v * v));
        let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if max > 0.0 && min / max > RANK_TOL {
            return Ok(chol.solve(b));
        }
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rmin = r
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if rmax == 0.0 || rmin / rmax <= RANK_TOL * 0.1 {
        return Err(Error::SingularSystem(format!(
            "{}x{} system is numerically rank deficient (pivot ratio {:.3e})",
            a.nrows(),
            a.ncols(),
            if rmax > 0.0 { rmin / rmax } else { 0.0 }
        )));
    }
    qr.solve(b)
        .ok_or_else(|| Error::SingularSystem("pivoted QR solve failed".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_handles_empty_and_psd() {
        assert_eq!(cholesky_lower(&DMatrix::zeros(0, 0)).unwrap().nrows(), 0);
        // rank-one PSD matrix needs the jitter path
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let a = &v * v.transpose();
        assert!(cholesky_lower(&a).is_some());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_lower(&neg).is_none());
    }

    #[test]
    fn covariance_of_known_rows() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let c = sample_covariance(&x);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((c[(0, 1)] - 2.0).abs() < 1e-12);
        assert!((c[(1, 1)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            solve_spd_or_pivoted(&a, &b),
            Err(Error::SingularSystem(_))
        ));
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let x = solve_spd_or_pivoted(&a, &b).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-12);
    }
}

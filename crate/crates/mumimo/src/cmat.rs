//! Complex-matrix conventions and small linear-algebra helpers.
//!
//! Conventions used throughout the crate:
//! * a channel matrix `H` is `K x M` with row `k` holding the channel of
//!   user `k`;
//! * a precoding matrix `A` is `M x N` with column `n` serving the `n`-th
//!   selected user.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Condition-number threshold beyond which a Gram matrix is treated as
/// singular. Complex Gaussian channel draws are almost surely full rank;
/// this only catches pathological inputs.
pub const COND_LIMIT: f64 = 1e12;

/// `rows * rows^H`, the Gram matrix of a set of row vectors.
pub fn gram_of_rows(rows: &CMatrix) -> CMatrix {
    rows * rows.adjoint()
}

/// Real part of the trace.
pub fn trace_real(m: &CMatrix) -> f64 {
    m.trace().re
}

/// Largest entry magnitude.
pub fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Condition number of a Hermitian matrix from its eigenvalue spread.
/// Returns `f64::INFINITY` when the smallest eigenvalue is not positive.
pub fn hermitian_condition(m: &CMatrix) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a Hermitian positive-definite matrix, rejecting inputs with
/// condition number above [`COND_LIMIT`].
pub fn inv_hermitian(m: &CMatrix, context: &str) -> Result<CMatrix> {
    if hermitian_condition(m) > COND_LIMIT {
        return Err(Error::Singular(format!(
            "{context}: Gram matrix condition number exceeds {COND_LIMIT:e}"
        )));
    }
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| m.clone().try_inverse())
        .ok_or_else(|| Error::Singular(format!("{context}: inversion failed")))
}

/// Extract the listed rows (in order) into a new matrix.
pub fn select_rows(m: &CMatrix, indices: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(indices.len(), m.ncols());
    for (i, &r) in indices.iter().enumerate() {
        out.row_mut(i).copy_from(&m.row(r));
    }
    out
}

/// Squared Euclidean norm of each row.
pub fn row_norms_sq(m: &CMatrix) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.row(i).norm_squared()).collect()
}

/// Scale row `i` by the real factor `factors[i]`.
pub fn scale_rows(m: &CMatrix, factors: &[f64]) -> CMatrix {
    assert_eq!(m.nrows(), factors.len());
    let mut out = m.clone();
    for (i, &f) in factors.iter().enumerate() {
        out.row_mut(i).apply(|z| *z *= f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CMatrix {
        CMatrix::from_row_slice(
            2,
            3,
            &[
                Complex64::new(1.0, 0.5),
                Complex64::new(0.0, -1.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(-1.0, 1.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 2.0),
            ],
        )
    }

    #[test]
    fn gram_is_hermitian() {
        let g = gram_of_rows(&small());
        assert!(max_abs_entry(&(&g - g.adjoint())) < 1e-14);
    }

    #[test]
    fn inv_hermitian_inverts() {
        let g = gram_of_rows(&small());
        let gi = inv_hermitian(&g, "test").unwrap();
        let eye = &g * &gi;
        let id = CMatrix::identity(2, 2);
        assert!(max_abs_entry(&(eye - id)) < 1e-12);
    }

    #[test]
    fn inv_hermitian_rejects_singular() {
        // rank-one Gram matrix
        let row = CMatrix::from_row_slice(1, 2, &[Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]);
        let mut stacked = CMatrix::zeros(2, 2);
        stacked.row_mut(0).copy_from(&row.row(0));
        stacked.row_mut(1).copy_from(&row.row(0));
        let g = gram_of_rows(&stacked);
        assert!(inv_hermitian(&g, "test").is_err());
    }

    #[test]
    fn select_rows_orders_and_repeats() {
        let m = small();
        let s = select_rows(&m, &[1, 0, 1]);
        assert_eq!(s.nrows(), 3);
        assert_eq!(s.row(0), m.row(1));
        assert_eq!(s.row(1), m.row(0));
        assert_eq!(s.row(2), m.row(1));
    }

    #[test]
    fn row_norms_match_manual() {
        let m = small();
        let norms = row_norms_sq(&m);
        assert!((norms[0] - (1.25 + 1.0 + 4.0)).abs() < 1e-14);
        assert!((norms[1] - (2.0 + 0.25 + 4.0)).abs() < 1e-14);
    }
}

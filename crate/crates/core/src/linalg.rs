//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` by LU and rejects the result when the residual is not
/// below `1e-10` relative to the data scale.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let x = a.clone().lu().solve(b)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let scale = 1.0 + a.amax() * x.amax() + b.amax();
    let res = (a * &x - b).amax();
    (res <= 1e-10 * scale).then_some(x)
}

/// Inverse with the same residual guard as [`solve_checked`].
pub fn inverse_checked(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let inv = a.clone().try_inverse()?;
    if !inv.iter().all(|v| v.is_finite()) {
        return None;
    }
    let res = (a * &inv - DMatrix::identity(n, n)).amax();
    (res <= 1e-10 * (1.0 + a.amax() * inv.amax())).then_some(inv)
}

/// Submatrix on the given row and column index lists.
pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

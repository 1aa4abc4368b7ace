//! Small dense helpers shared by the passage and gradient code.

use nalgebra::{DMatrix, DVector};

/// `[A]_dg`: keep the diagonal, zero everything else.
pub fn diag_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&a.diagonal())
}

/// `1 1ᵀ [A]_dg`: every row equals the diagonal of `A`.
pub fn ones_diag(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.diagonal();
    DMatrix::from_fn(a.nrows(), a.ncols(), |_, j| d[j])
}

/// `A - 1 1ᵀ [A]_dg`.
pub fn minus_ones_diag(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.diagonal();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - d[j])
}

/// Right-multiplication by `dg(v)`, i.e. column `j` scaled by `v[j]`.
pub fn scale_columns(a: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * v[j])
}

/// `1 v` for a row vector given as a column `v`.
pub fn ones_times_row(n: usize, v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(n, v.len(), |_, j| v[j])
}

/// Quadratic form `xᵀ A y`.
pub fn quad_form(x: &DVector<f64>, a: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (x.transpose() * a * y)[(0, 0)]
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_vec(a: &DVector<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// One-norm (max column sum), used for condition estimates.
pub fn norm_one(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dg_helpers() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(diag_part(&a), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        assert_eq!(ones_diag(&a), DMatrix::from_row_slice(2, 2, &[1.0, 4.0, 1.0, 4.0]));
        assert_eq!(minus_ones_diag(&a), DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]));
        let v = DVector::from_vec(vec![2.0, 0.5]);
        assert_eq!(scale_columns(&a, &v), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 6.0, 2.0]));
        assert_eq!(norm_one(&a), 6.0);
    }
}

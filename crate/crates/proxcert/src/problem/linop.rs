use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A real linear operator `A` with dense and structured backends.
///
/// The structured variant stores a symmetric tridiagonal Toeplitz matrix
/// (constant diagonal and off-diagonal), which is the shape of the built-in
/// benchmark instance; its matrix-vector products run in `O(n)` without
/// materializing the matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum LinearOperator {
    /// Explicit dense matrix.
    Dense(DMatrix<f64>),
    /// Symmetric tridiagonal Toeplitz matrix of order `dim` with `diag` on
    /// the main diagonal and `offdiag` on both adjacent diagonals.
    SymTridiagonal { dim: usize, diag: f64, offdiag: f64 },
}

impl LinearOperator {
    /// Wraps a dense matrix. Errors when either dimension is zero.
    pub fn dense(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "dense operator must have positive dimensions".into(),
            ));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "dense operator entries must be finite".into(),
            ));
        }
        Ok(LinearOperator::Dense(a))
    }

    /// Builds the symmetric tridiagonal Toeplitz operator of order `dim`.
    pub fn sym_tridiagonal(dim: usize, diag: f64, offdiag: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "tridiagonal operator needs dim >= 1".into(),
            ));
        }
        if !diag.is_finite() || !offdiag.is_finite() {
            return Err(Error::InvalidParameter(
                "tridiagonal coefficients must be finite".into(),
            ));
        }
        Ok(LinearOperator::SymTridiagonal { dim, diag, offdiag })
    }

    pub fn nrows(&self) -> usize {
        match self {
            LinearOperator::Dense(a) => a.nrows(),
            LinearOperator::SymTridiagonal { dim, .. } => *dim,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            LinearOperator::Dense(a) => a.ncols(),
            LinearOperator::SymTridiagonal { dim, .. } => *dim,
        }
    }

    /// Computes `A x`.
    ///
    /// Panics if `x.len() != self.ncols()`; callers validate dimensions at
    /// problem construction.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols(), "operator/vector dimension mismatch");
        match self {
            LinearOperator::Dense(a) => a * x,
            LinearOperator::SymTridiagonal { dim, diag, offdiag } => {
                tridiagonal_apply(*dim, *diag, *offdiag, x)
            }
        }
    }

    /// Computes `A^T x`.
    pub fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows(), "operator/vector dimension mismatch");
        match self {
            LinearOperator::Dense(a) => a.tr_mul(x),
            // Symmetric: A^T = A.
            LinearOperator::SymTridiagonal { dim, diag, offdiag } => {
                tridiagonal_apply(*dim, *diag, *offdiag, x)
            }
        }
    }

    /// Materializes the operator as a dense matrix (test oracles, small
    /// spectra). Guarded to `dim <= limit` to avoid accidental huge
    /// allocations.
    pub fn to_dense(&self, limit: usize) -> Result<DMatrix<f64>> {
        let n = self.nrows().max(self.ncols());
        if n > limit {
            return Err(Error::InvalidParameter(format!(
                "refusing to densify operator of order {n} (limit {limit})"
            )));
        }
        Ok(match self {
            LinearOperator::Dense(a) => a.clone(),
            LinearOperator::SymTridiagonal { dim, diag, offdiag } => {
                DMatrix::from_fn(*dim, *dim, |i, j| {
                    if i == j {
                        *diag
                    } else if i.abs_diff(j) == 1 {
                        *offdiag
                    } else {
                        0.0
                    }
                })
            }
        })
    }
}

fn tridiagonal_apply(dim: usize, diag: f64, offdiag: f64, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(dim);
    for i in 0..dim {
        let mut acc = diag * x[i];
        if i > 0 {
            acc += offdiag * x[i - 1];
        }
        if i + 1 < dim {
            acc += offdiag * x[i + 1];
        }
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_apply_matches_dense() {
        let op = LinearOperator::sym_tridiagonal(7, 2.0, 1.0).unwrap();
        let dense = op.to_dense(16).unwrap();
        let x = DVector::from_fn(7, |i, _| (i as f64 + 1.0) * 0.3 - 1.0);
        let via_struct = op.apply(&x);
        let via_dense = &dense * &x;
        assert!((via_struct - via_dense).norm() < 1e-14);
    }

    #[test]
    fn transpose_of_dense_is_transpose() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let op = LinearOperator::dense(a.clone()).unwrap();
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let expect = a.transpose() * &y;
        assert_eq!(op.apply_transpose(&y), expect);
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(LinearOperator::dense(DMatrix::zeros(0, 3)).is_err());
        assert!(LinearOperator::sym_tridiagonal(0, 2.0, 1.0).is_err());
        assert!(LinearOperator::sym_tridiagonal(3, f64::NAN, 1.0).is_err());
        let bad = DMatrix::from_row_slice(1, 1, &[f64::INFINITY]);
        assert!(LinearOperator::dense(bad).is_err());
    }

    #[test]
    fn densify_guard() {
        let op = LinearOperator::sym_tridiagonal(100, 2.0, 1.0).unwrap();
        assert!(op.to_dense(50).is_err());
        assert!(op.to_dense(100).is_ok());
    }
}

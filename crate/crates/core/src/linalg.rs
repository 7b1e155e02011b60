//! Dense matrix wrapper and the small least-squares kernels shared by the
//! solvers and the dictionary update.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Real matrix with finite entries and at least one row and one column.
///
/// Column `j` is an atom when the matrix is used as a dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn new(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be non-empty, got {}x{}",
                inner.nrows(),
                inner.ncols()
            )));
        }
        if inner.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(DenseMatrix(inner))
    }

    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<V: AsRef<[f64]>>(columns: &[V]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        if columns.iter().any(|c| c.as_ref().len() != rows) {
            return Err(Error::DimensionMismatch(
                "columns have different lengths".into(),
            ));
        }
        let mut m = DMatrix::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            m.column_mut(j).copy_from_slice(c.as_ref());
        }
        Self::new(m)
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len());
        for i in 0..self.0.nrows() {
            out.extend(self.0.row(i).iter().copied());
        }
        out
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.norm()).collect()
    }

    /// Largest absolute inner product between two distinct normalized columns.
    pub fn mutual_coherence(&self) -> f64 {
        let norms = self.column_norms();
        let mut mu: f64 = 0.0;
        for i in 0..self.0.ncols() {
            for j in (i + 1)..self.0.ncols() {
                let ip = self.0.column(i).dot(&self.0.column(j)) / (norms[i] * norms[j]);
                mu = mu.max(ip.abs());
            }
        }
        mu
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for DenseMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Minimum-norm least-squares solution of `a x = b` via the SVD.
///
/// Singular values below `max(sv) * max(rows, cols) * eps` are treated as zero,
/// so rank-deficient systems get the least-norm solution.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DVector::zeros(a.ncols());
    }
    let cutoff = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(b, cutoff)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// [`lstsq_min_norm`] for several right-hand sides at once.
pub fn lstsq_min_norm_multi(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    if smax == 0.0 {
        return DMatrix::zeros(a.ncols(), b.ncols());
    }
    svd.solve(b, cutoff)
        .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), b.ncols()))
}

/// Reciprocal condition number `λ_min / λ_max` of a symmetric positive
/// semi-definite matrix. Returns 0 for singular or empty matrices.
pub fn spd_rcond(g: &DMatrix<f64>) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max <= 0.0 || min <= 0.0 {
        0.0
    } else {
        min / max
    }
}

//! Sparse coding against a fixed dictionary.

mod lars;
mod omp;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub use lars::{lars, lars_with_trace, LarsPrecondition, LarsStep};
pub use omp::{omp, omp_with_trace, OmpStep};

/// Relative tolerance on `|c_i| = C` for entering the LARS active set.
pub const TIE_TOLERANCE: f64 = 1e-10;
/// LARS stops when the reciprocal condition number of the active Gram matrix falls below this.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Sparse coefficient vector of dimension `dim` with an explicit support.
///
/// The support is strictly increasing (0-based) and never holds a zero coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    dim: usize,
    support: Vec<usize>,
    coefficients: Vec<f64>,
}

impl SparseCode {
    pub fn zeros(dim: usize) -> Self {
        SparseCode {
            dim,
            support: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    /// Builds a code from `(index, value)` pairs in any order; zero values are dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut pairs: Vec<_> = pairs.into_iter().filter(|&(_, v)| v != 0.0).collect();
        pairs.sort_by_key(|&(i, _)| i);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::DimensionMismatch("duplicate support index".into()));
        }
        if pairs.iter().any(|&(i, _)| i >= dim) {
            return Err(Error::DimensionMismatch(format!(
                "support index outside 0..{dim}"
            )));
        }
        if pairs.iter().any(|&(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite("sparse code"));
        }
        let (support, coefficients) = pairs.into_iter().unzip();
        Ok(SparseCode {
            dim,
            support,
            coefficients,
        })
    }

    pub fn from_dense(x: &[f64]) -> Result<Self> {
        SparseCode::from_pairs(x.len(), x.iter().copied().enumerate())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Number of non-zero entries.
    pub fn nnz(&self) -> usize {
        self.support.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.support
            .binary_search(&index)
            .map_or(0.0, |k| self.coefficients[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support
            .iter()
            .copied()
            .zip(self.coefficients.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            x[i] = v;
        }
        x
    }

    /// `A x`.
    pub fn reconstruct(&self, a: &DenseMatrix) -> DVector<f64> {
        let mut out = DVector::zeros(a.nrows());
        for (i, v) in self.iter() {
            out.axpy(v, &a.column(i), 1.0);
        }
        out
    }

    pub(crate) fn scale_entry(&mut self, index: usize, factor: f64) {
        if let Ok(k) = self.support.binary_search(&index) {
            self.coefficients[k] *= factor;
        }
    }

    pub(crate) fn remove_entry(&mut self, index: usize) {
        if let Ok(k) = self.support.binary_search(&index) {
            self.support.remove(k);
            self.coefficients.remove(k);
        }
    }
}

/// When to stop growing the support: a sparsity budget `T`, a residual
/// tolerance `ε`, or both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    max_nonzeros: Option<usize>,
    residual_tol: Option<f64>,
}

impl StoppingRule {
    pub fn new(max_nonzeros: Option<usize>, residual_tol: Option<f64>) -> Result<Self> {
        match (max_nonzeros, residual_tol) {
            (None, None) => Err(Error::InvalidConfig(
                "stopping rule needs a sparsity budget or a residual tolerance".into(),
            )),
            (Some(0), _) => Err(Error::InvalidConfig(
                "sparsity budget must be positive".into(),
            )),
            (_, Some(eps)) if !(eps >= 0.0 && eps.is_finite()) => Err(Error::InvalidConfig(
                "residual tolerance must be finite and non-negative".into(),
            )),
            _ => Ok(StoppingRule {
                max_nonzeros,
                residual_tol,
            }),
        }
    }

    /// At most `t` non-zeros.
    pub fn sparsity(t: usize) -> Result<Self> {
        StoppingRule::new(Some(t), None)
    }

    pub fn tolerance(eps: f64) -> Result<Self> {
        StoppingRule::new(None, Some(eps))
    }

    pub fn max_nonzeros(&self) -> Option<usize> {
        self.max_nonzeros
    }

    pub fn residual_tol(&self) -> Option<f64> {
        self.residual_tol
    }

    pub(crate) fn budget_reached(&self, active: usize) -> bool {
        self.max_nonzeros.is_some_and(|t| active >= t)
    }

    pub(crate) fn residual_reached(&self, residual_norm: f64) -> bool {
        self.residual_tol.is_some_and(|eps| residual_norm <= eps)
    }
}

/// Which sparse coder to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coder {
    Omp,
    Lars,
}

impl fmt::Display for Coder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coder::Omp => "omp",
            Coder::Lars => "lars",
        })
    }
}

impl FromStr for Coder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omp" => Ok(Coder::Omp),
            "lars" => Ok(Coder::Lars),
            other => Err(Error::InvalidConfig(format!("unknown coder {other:?}"))),
        }
    }
}

impl Coder {
    /// Codes one signal. LARS runs without centering.
    pub fn code(
        self,
        a: &DenseMatrix,
        b: &DVector<f64>,
        stop: &StoppingRule,
    ) -> Result<SparseCode> {
        match self {
            Coder::Omp => omp(a, b, stop),
            Coder::Lars => lars(a, b, stop, LarsPrecondition::Raw),
        }
    }
}

/// Codes every column of `signals` independently.
///
/// Columns run in parallel; each result depends only on its own column, so
/// the output matches a sequential loop exactly and keeps the input order.
pub fn sparse_code_batch(
    a: &DenseMatrix,
    signals: &DenseMatrix,
    stop: &StoppingRule,
    coder: Coder,
) -> Vec<Result<SparseCode>> {
    (0..signals.ncols())
        .into_par_iter()
        .map(|j| {
            let b = signals.column(j).into_owned();
            coder.code(a, &b, stop)
        })
        .collect()
}

/// [`sparse_code_batch`], failing with every per-column error if any column fails.
pub fn sparse_code_all(
    a: &DenseMatrix,
    signals: &DenseMatrix,
    stop: &StoppingRule,
    coder: Coder,
) -> Result<Vec<SparseCode>> {
    let results = sparse_code_batch(a, signals, stop, coder);
    let failures: Vec<(usize, String)> = results
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.as_ref().err().map(|e| (j, e.to_string())))
        .collect();
    if !failures.is_empty() {
        return Err(Error::BatchFailed { failures });
    }
    Ok(results.into_iter().map(|r| r.unwrap()).collect())
}

pub(crate) fn check_signal(a: &DenseMatrix, b: &DVector<f64>) -> Result<()> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "signal has length {}, dictionary has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_code_drops_zeros_and_sorts() {
        let x = SparseCode::from_pairs(5, [(3, 2.0), (1, 0.0), (0, -1.0)]).unwrap();
        assert_eq!(x.support(), &[0, 3]);
        assert_eq!(x.coefficients(), &[-1.0, 2.0]);
        assert_eq!(x.to_dense(), vec![-1.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(x.nnz(), 2);
        assert!(SparseCode::from_pairs(2, [(0, 1.0), (0, 2.0)]).is_err());
        assert!(SparseCode::from_pairs(2, [(2, 1.0)]).is_err());
    }

    #[test]
    fn stopping_rule_needs_a_field() {
        assert!(StoppingRule::new(None, None).is_err());
        assert!(StoppingRule::sparsity(0).is_err());
        assert!(StoppingRule::tolerance(-1.0).is_err());
        let s = StoppingRule::new(Some(3), Some(0.1)).unwrap();
        assert!(s.budget_reached(3) && !s.budget_reached(2));
        assert!(s.residual_reached(0.1) && !s.residual_reached(0.2));
    }

    #[test]
    fn coder_parses() {
        assert_eq!("LARS".parse::<Coder>().unwrap(), Coder::Lars);
        assert_eq!(Coder::Omp.to_string(), "omp");
        assert!("lasso".parse::<Coder>().is_err());
    }

    #[test]
    fn batch_on_the_atoms_themselves() {
        let s = 0.5f64.sqrt();
        let a = DenseMatrix::from_row_major(2, 3, &[1.0, 0.0, s, 0.0, 1.0, s]).unwrap();
        let stop = StoppingRule::sparsity(1).unwrap();
        for coder in [Coder::Omp, Coder::Lars] {
            let codes = sparse_code_all(&a, &a, &stop, coder).unwrap();
            for (i, c) in codes.iter().enumerate() {
                assert_eq!(c.support(), &[i]);
                assert!((c.coefficients()[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_reports_failing_columns() {
        // duplicated atoms tie at the first LARS step only for the first column
        let a = DenseMatrix::from_row_major(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let b = DenseMatrix::from_row_major(2, 2, &[1.0, 0.1, 0.2, 1.0]).unwrap();
        let stop = StoppingRule::sparsity(2).unwrap();
        let results = sparse_code_batch(&a, &b, &stop, Coder::Lars);
        assert_eq!(results.len(), 2);
        assert!(matches!(results[0], Err(Error::DegenerateDictionary)));
        assert!(results[1].is_ok());
        match sparse_code_all(&a, &b, &stop, Coder::Lars) {
            Err(Error::BatchFailed { failures }) => {
                assert_eq!(failures.iter().map(|f| f.0).collect::<Vec<_>>(), vec![0]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

use nalgebra::{DMatrix, DVector};

use super::{check_signal, SparseCode, StoppingRule};
use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, DenseMatrix};

/// State after one OMP iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OmpStep {
    pub selected: usize,
    /// Support after the iteration, in selection order.
    pub support: Vec<usize>,
    /// Least-squares coefficients aligned with `support`.
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

/// Orthogonal matching pursuit.
///
/// Each iteration adds the atom whose best single-atom fit of the residual
/// leaves the smallest error (largest `(a_jᵀ r)² / ‖a_j‖²`), refits all
/// selected coefficients by least squares and recomputes the residual, which
/// is then orthogonal to every selected atom.
pub fn omp(a: &DenseMatrix, b: &DVector<f64>, stop: &StoppingRule) -> Result<SparseCode> {
    omp_with_trace(a, b, stop).map(|(code, _)| code)
}

pub fn omp_with_trace(
    a: &DenseMatrix,
    b: &DVector<f64>,
    stop: &StoppingRule,
) -> Result<(SparseCode, Vec<OmpStep>)> {
    check_signal(a, b)?;
    let norms_sq: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    if let Some(j) = norms_sq.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroAtom(j));
    }
    let k = a.ncols();
    let b_norm = b.norm();
    let mut in_support = vec![false; k];
    let mut support: Vec<usize> = Vec::new();
    let mut coefficients = DVector::zeros(0);
    let mut residual = b.clone();
    let mut steps = Vec::new();

    loop {
        if support.len() == k
            || stop.budget_reached(support.len())
            || stop.residual_reached(residual.norm())
        {
            break;
        }
        let corr = a.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for j in (0..k).filter(|&j| !in_support[j]) {
            let gain = corr[j] * corr[j] / norms_sq[j];
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((j, gain)) = best else { break };
        // residual already orthogonal to every remaining atom
        if gain.sqrt() <= 1e-14 * b_norm {
            break;
        }
        in_support[j] = true;
        support.push(j);

        let sub = DMatrix::from_fn(a.nrows(), support.len(), |r, c| a[(r, support[c])]);
        coefficients = lstsq_min_norm(&sub, b);
        residual = b - &sub * &coefficients;
        steps.push(OmpStep {
            selected: j,
            support: support.clone(),
            coefficients: coefficients.iter().copied().collect(),
            residual_norm: residual.norm(),
        });
    }

    let code =
        SparseCode::from_pairs(k, support.iter().copied().zip(coefficients.iter().copied()))?;
    Ok((code, steps))
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_signal, SparseCode, StoppingRule, RCOND_THRESHOLD, TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, spd_rcond, DenseMatrix};

/// Input conditioning for LARS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LarsPrecondition {
    /// Center the signal and every column, then scale columns to unit norm.
    /// Coefficients refer to the centered (unscaled) columns.
    Centered,
    /// Use the dictionary as is; every column must already have unit norm.
    Raw,
}

/// One equiangular step of the LARS path.
#[derive(Debug, Clone, PartialEq)]
pub struct LarsStep {
    /// Active set during the step, in entry order.
    pub active: Vec<usize>,
    /// Indices that joined the active set at the start of this step.
    pub entered: Vec<usize>,
    /// Largest absolute correlation `C` at the start of the step.
    pub max_correlation: f64,
    /// `|a_iᵀ r|` for every active `i` at the start of the step, recomputed from the residual.
    pub active_correlations: Vec<f64>,
    /// Normalizer `T_S = (1ᵀ G_S⁻¹ 1)^(-1/2)`.
    pub equiangular_norm: f64,
    /// `max_i |(A_Sᵀ u_S)_i - T_S|` for the signed active columns.
    pub equiangular_error: f64,
    pub step: f64,
    /// Dense path coefficients after the step (on the conditioned columns).
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

/// Least angle regression on a fixed dictionary, truncated by `stop`.
///
/// The estimate `μ` moves along the direction equiangular to all active
/// columns until an inactive column reaches the same absolute correlation.
/// Coefficients are read out at termination by least squares of `μ` on the
/// active columns.
pub fn lars(
    a: &DenseMatrix,
    b: &DVector<f64>,
    stop: &StoppingRule,
    precondition: LarsPrecondition,
) -> Result<SparseCode> {
    lars_with_trace(a, b, stop, precondition).map(|(code, _)| code)
}

pub fn lars_with_trace(
    a: &DenseMatrix,
    b: &DVector<f64>,
    stop: &StoppingRule,
    precondition: LarsPrecondition,
) -> Result<(SparseCode, Vec<LarsStep>)> {
    check_signal(a, b)?;
    let (a, b, scales) = condition(a, b, precondition)?;
    let (n, k) = a.shape();

    let mut mu = DVector::<f64>::zeros(n);
    let mut path = vec![0.0; k];
    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut in_active = vec![false; k];
    let mut steps = Vec::new();

    let b_norm = b.norm();
    let mut corr = a.tr_mul(&b);
    let mut big_c = corr.amax();
    if big_c <= 1e-14 * b_norm || big_c == 0.0 {
        return Ok((SparseCode::zeros(k), steps));
    }
    let mut entrants = tied(&corr, &in_active, big_c, None);

    loop {
        if let Some(t) = stop.max_nonzeros() {
            entrants.truncate(t.saturating_sub(active.len()));
        }
        if entrants.is_empty() {
            break;
        }
        let first = active.is_empty();
        for &j in &entrants {
            active.push(j);
            signs.push(corr[j].signum());
            in_active[j] = true;
        }
        let signed = DMatrix::from_fn(n, active.len(), |r, c| signs[c] * a[(r, active[c])]);
        let gram = signed.tr_mul(&signed);
        if spd_rcond(&gram) < RCOND_THRESHOLD {
            if first {
                return Err(Error::DegenerateDictionary);
            }
            for _ in 0..entrants.len() {
                let j = active.pop().unwrap();
                signs.pop();
                in_active[j] = false;
            }
            break;
        }
        let ones = DVector::from_element(active.len(), 1.0);
        let z = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&ones),
            None => lstsq_min_norm(&gram, &ones),
        };
        let t_s = 1.0 / ones.dot(&z).sqrt();
        let w = z * t_s;
        let u = &signed * &w;
        let t = a.tr_mul(&u);
        let equiangular_error = active
            .iter()
            .enumerate()
            .map(|(c, &i)| (signs[c] * t[i] - t_s).abs())
            .fold(0.0, f64::max);
        let active_correlations = active.iter().map(|&i| corr[i].abs()).collect();

        // min⁺ over the inactive columns; the full step C / T_S zeroes all
        // active correlations and bounds it from above
        let mut step = big_c / t_s;
        let mut next = None;
        for j in (0..k).filter(|&j| !in_active[j]) {
            for cand in [
                (big_c - corr[j]) / (t_s - t[j]),
                (big_c + corr[j]) / (t_s + t[j]),
            ] {
                if cand > 0.0 && cand < step {
                    step = cand;
                    next = Some(j);
                }
            }
        }

        mu.axpy(step, &u, 1.0);
        for (c, &i) in active.iter().enumerate() {
            path[i] += step * w[c] * signs[c];
        }
        let residual = &b - &mu;
        corr = a.tr_mul(&residual);
        let residual_norm = residual.norm();
        steps.push(LarsStep {
            active: active.clone(),
            entered: std::mem::take(&mut entrants),
            max_correlation: big_c,
            active_correlations,
            equiangular_norm: t_s,
            equiangular_error,
            step,
            coefficients: path.clone(),
            residual_norm,
        });

        let Some(next) = next else { break };
        if residual_norm <= 1e-13 * b_norm
            || active.len() == k
            || stop.residual_reached(residual_norm)
            || stop.budget_reached(active.len())
        {
            break;
        }
        big_c -= step * t_s;
        entrants = tied(&corr, &in_active, big_c, Some(next));
    }

    let code = if active.is_empty() {
        SparseCode::zeros(k)
    } else {
        let sub = DMatrix::from_fn(n, active.len(), |r, c| a[(r, active[c])]);
        let x = lstsq_min_norm(&sub, &mu);
        let pairs = active.iter().zip(x.iter()).map(|(&i, &v)| match &scales {
            Some(s) => (i, v / s[i]),
            None => (i, v),
        });
        SparseCode::from_pairs(k, pairs)?
    };
    Ok((code, steps))
}

/// Inactive indices whose absolute correlation equals `level` within the tie
/// tolerance, strongest first. `forced` is always included.
fn tied(corr: &DVector<f64>, in_active: &[bool], level: f64, forced: Option<usize>) -> Vec<usize> {
    let mut out: Vec<usize> = (0..corr.len())
        .filter(|&j| !in_active[j])
        .filter(|&j| Some(j) == forced || (corr[j].abs() - level).abs() <= TIE_TOLERANCE * level)
        .collect();
    out.sort_by(|&x, &y| {
        let key = |j: usize| (Some(j) != forced, -corr[j].abs());
        key(x).partial_cmp(&key(y)).unwrap().then(x.cmp(&y))
    });
    out
}

type Conditioned = (DMatrix<f64>, DVector<f64>, Option<Vec<f64>>);

fn condition(a: &DenseMatrix, b: &DVector<f64>, pre: LarsPrecondition) -> Result<Conditioned> {
    match pre {
        LarsPrecondition::Raw => {
            for (j, col) in a.column_iter().enumerate() {
                let norm = col.norm();
                if norm == 0.0 {
                    return Err(Error::ZeroAtom(j));
                }
                if (norm - 1.0).abs() > 1e-8 {
                    return Err(Error::UnnormalizedAtom { index: j, norm });
                }
            }
            Ok((a.as_matrix().clone(), b.clone(), None))
        }
        LarsPrecondition::Centered => {
            let mut m = a.as_matrix().clone();
            let mut scales = Vec::with_capacity(m.ncols());
            for (j, mut col) in m.column_iter_mut().enumerate() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
                let norm = col.norm();
                if norm <= 1e-12 * (1.0 + mean.abs()) {
                    return Err(Error::ZeroAtom(j));
                }
                col /= norm;
                scales.push(norm);
            }
            let mean = b.mean();
            Ok((m, b.add_scalar(-mean), Some(scales)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn run_full(a: &DenseMatrix, b: &DVector<f64>) -> (SparseCode, Vec<LarsStep>) {
        let stop = StoppingRule::sparsity(a.ncols()).unwrap();
        lars_with_trace(a, b, &stop, LarsPrecondition::Raw).unwrap()
    }

    #[test]
    fn orthonormal_design_is_exact() {
        let a = DenseMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let (x, steps) = run_full(&a, &dvec(&[3.0, 1.0]));
        assert_eq!(steps[0].active, vec![0]);
        assert!((steps[0].step - 2.0).abs() < 1e-14);
        assert_eq!(steps.len(), 2);
        assert!((x.get(0) - 3.0).abs() < 1e-12 && (x.get(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signal_equal_to_an_atom() {
        let rho: f64 = 0.3;
        let a2 = [rho, (1.0 - rho * rho).sqrt()];
        let a = DenseMatrix::from_row_major(2, 2, &[1.0, a2[0], 0.0, a2[1]]).unwrap();
        let b = dvec(&[1.0, 0.0]);
        let (x, steps) = run_full(&a, &b);
        assert_eq!(steps[0].active, vec![0]);
        assert!(steps.last().unwrap().residual_norm < 1e-14);
        assert!((x.get(0) - 1.0).abs() < 1e-12);
        assert!(x.get(1).abs() < 1e-12);
    }

    #[test]
    fn two_column_entry_event_matches_closed_form() {
        let rho: f64 = 0.4;
        let a2 = [rho, (1.0 - rho * rho).sqrt()];
        let a = DenseMatrix::from_row_major(2, 2, &[1.0, a2[0], 0.0, a2[1]]).unwrap();
        let b = dvec(&[2.0, 0.5]);
        let c1 = b[0];
        let c2 = a2[0] * b[0] + a2[1] * b[1];
        assert!(c1 > c2.abs());
        // moving along a_1 by γ: c1 - γ = ±(c2 - γρ)
        let gamma = [(c1 - c2) / (1.0 - rho), (c1 + c2) / (1.0 + rho)]
            .into_iter()
            .filter(|g| *g > 0.0)
            .fold(f64::INFINITY, f64::min);
        let (_, steps) = run_full(&a, &b);
        assert!((steps[0].step - gamma).abs() < 1e-12);
        assert_eq!(steps[1].entered, vec![1]);
        let r = &b - dvec(&[gamma, 0.0]);
        let ca = r[0].abs();
        let cb = (a2[0] * r[0] + a2[1] * r[1]).abs();
        assert!((ca - cb).abs() < 1e-9);
        let cs = &steps[1].active_correlations;
        assert!((cs[0] - cs[1]).abs() < 1e-9);
    }

    #[test]
    fn budget_truncates_path() {
        let a = DenseMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let stop = StoppingRule::sparsity(1).unwrap();
        let x = lars(&a, &dvec(&[3.0, 1.0, 0.5]), &stop, LarsPrecondition::Raw).unwrap();
        assert_eq!(x.support(), &[0]);
        // the single active coefficient stops where column 2 ties: 3 - γ = 1
        assert!((x.get(0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_atom_rejected_in_raw_mode() {
        let a = DenseMatrix::from_row_major(2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        let stop = StoppingRule::sparsity(1).unwrap();
        let r = lars(&a, &dvec(&[1.0, 1.0]), &stop, LarsPrecondition::Raw);
        assert!(matches!(r, Err(Error::UnnormalizedAtom { index: 0, .. })));
    }

    #[test]
    fn duplicated_atoms_tied_at_start_are_degenerate() {
        let a = DenseMatrix::from_row_major(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let stop = StoppingRule::sparsity(2).unwrap();
        let r = lars(&a, &dvec(&[1.0, 0.2]), &stop, LarsPrecondition::Raw);
        assert!(matches!(r, Err(Error::DegenerateDictionary)));
        // the duplicates tie later; the budget admits only one of them
        let ok = lars(&a, &dvec(&[0.1, 1.0]), &stop, LarsPrecondition::Raw).unwrap();
        assert_eq!(ok.support(), &[0, 2]);
    }

    #[test]
    fn centered_mode_ignores_offsets() {
        // columns and signal shifted by constants code like their centered versions
        let a = DenseMatrix::from_row_major(
            3,
            2,
            &[
                1.0 + 5.0,
                0.0 - 1.0,
                0.0 + 5.0,
                1.0 - 1.0,
                -1.0 + 5.0,
                -1.0 - 1.0,
            ],
        )
        .unwrap();
        let b = dvec(&[2.0 + 7.0, 0.0 + 7.0, -2.0 + 7.0]);
        let stop = StoppingRule::sparsity(2).unwrap();
        let x = lars(&a, &b, &stop, LarsPrecondition::Centered).unwrap();
        assert_eq!(x.support(), &[0]);
        assert!((x.get(0) - 2.0).abs() < 1e-12);
        // a constant column has nothing left after centering
        let c = DenseMatrix::from_row_major(2, 1, &[1.0, 1.0]).unwrap();
        assert!(matches!(
            lars(&c, &dvec(&[1.0, 0.0]), &stop, LarsPrecondition::Centered),
            Err(Error::ZeroAtom(0))
        ));
    }

    #[test]
    fn zero_signal_gives_empty_code() {
        let a = DenseMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let (x, steps) = run_full(&a, &dvec(&[0.0, 0.0]));
        assert_eq!(x.nnz(), 0);
        assert!(steps.is_empty());
    }

    #[test]
    fn path_coefficients_match_readout() {
        let a = DenseMatrix::from_row_major(
            3,
            4,
            &[
                0.6, 0.0, 0.48, 0.8, //
                0.8, 0.6, 0.64, 0.0, //
                0.0, 0.8, 0.6, 0.6,
            ],
        )
        .unwrap();
        let a = DenseMatrix::new(a.normalize_columns()).unwrap();
        let b = dvec(&[1.0, -0.3, 0.7]);
        let stop = StoppingRule::sparsity(2).unwrap();
        let (x, steps) = lars_with_trace(&a, &b, &stop, LarsPrecondition::Raw).unwrap();
        let last = &steps.last().unwrap().coefficients;
        for j in 0..4 {
            assert!((x.get(j) - last[j]).abs() < 1e-10);
        }
        assert!(x.nnz() <= 2);
    }

    trait NormalizeColumns {
        fn normalize_columns(&self) -> DMatrix<f64>;
    }

    impl NormalizeColumns for DenseMatrix {
        fn normalize_columns(&self) -> DMatrix<f64> {
            let mut m = self.as_matrix().clone();
            for mut c in m.column_iter_mut() {
                let n = c.norm();
                c /= n;
            }
            m
        }
    }
}

//! Per-class dictionary learning by alternating minimization.
//!
//! Sparse coding (OMP or LARS, at most `T` non-zeros per column) alternates
//! with a method-of-optimal-directions update that solves the dictionary
//! least-squares problem in one shot.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::shapes::{DescriptorVector, ShapeClass};
use crate::solvers::{sparse_code_all, Coder, SparseCode, StoppingRule};

pub const FORMAT_VERSION: u32 = 1;
/// Tolerance on atom norms.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Training descriptors of one class, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub data: DenseMatrix,
    pub class_label: Option<ShapeClass>,
}

impl TrainingSet {
    pub fn new(data: DenseMatrix, class_label: Option<ShapeClass>) -> Self {
        TrainingSet { data, class_label }
    }

    /// Stacks descriptors as columns. All descriptors must share one length.
    pub fn from_descriptors(descriptors: &[DescriptorVector]) -> Result<Self> {
        let first = descriptors
            .first()
            .ok_or(Error::EmptyInput("training set has no descriptors"))?;
        let columns: Vec<&[f64]> = descriptors.iter().map(|d| d.values.as_slice()).collect();
        let data = DenseMatrix::from_columns(&columns)?;
        let label = first.class_label;
        let class_label = descriptors
            .iter()
            .all(|d| d.class_label == label)
            .then_some(label);
        Ok(TrainingSet { data, class_label })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Number of atoms `K`.
    pub atoms: usize,
    /// Sparsity budget `T`.
    pub max_nonzeros: usize,
    pub max_outer_iters: usize,
    /// Stop once the relative objective improvement of an outer iteration drops below this.
    pub objective_tol: f64,
    pub seed: u64,
    pub coder: Coder,
    /// How many times a stalled run may swap its most redundant atom for the
    /// worst-reconstructed training column instead of stopping.
    pub stall_replacements: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            atoms: 50,
            max_nonzeros: 5,
            max_outer_iters: 30,
            objective_tol: 1e-4,
            seed: 0,
            coder: Coder::Lars,
            stall_replacements: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.atoms < 2 {
            return bad("at least two atoms are required");
        }
        if self.max_nonzeros < 1 || self.max_nonzeros > self.atoms {
            return bad("sparsity budget must lie in 1..=atoms");
        }
        if self.max_outer_iters < 1 {
            return bad("at least one outer iteration is required");
        }
        if self.objective_tol.is_nan() || self.objective_tol < 0.0 {
            return bad("objective tolerance must be non-negative");
        }
        Ok(())
    }
}

/// One outer iteration of [`learn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective right after the sparse-coding step.
    pub objective_coded: f64,
    /// Objective after the dictionary update.
    pub objective_updated: f64,
    /// Best objective seen so far.
    pub best_objective: f64,
    pub replaced_atoms: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_objective: f64,
    pub solver_used: Coder,
    #[serde(default)]
    pub objective_log: Vec<IterationRecord>,
}

/// `N x K` matrix of unit-norm atoms learned for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DenseMatrix,
    pub class_label: Option<ShapeClass>,
    pub training_meta: Option<TrainingMeta>,
}

impl Dictionary {
    pub fn new(atoms: DenseMatrix, class_label: Option<ShapeClass>) -> Result<Self> {
        for (j, norm) in atoms.column_norms().into_iter().enumerate() {
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::UnnormalizedAtom { index: j, norm });
            }
        }
        if atoms.ncols() <= atoms.nrows() {
            log::warn!(
                "dictionary with {} atoms of length {} is not overcomplete",
                atoms.ncols(),
                atoms.nrows()
            );
        } else if (atoms.ncols() as f64) < 1.2 * atoms.nrows() as f64 {
            log::warn!(
                "dictionary with {} atoms of length {} is barely overcomplete",
                atoms.ncols(),
                atoms.nrows()
            );
        }
        Ok(Dictionary {
            atoms,
            class_label,
            training_meta: None,
        })
    }

    pub fn atoms(&self) -> &DenseMatrix {
        &self.atoms
    }

    /// Descriptor length `N`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `K`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DictionaryFile {
            format_version: FORMAT_VERSION,
            class: self.class_label,
            n: self.dim(),
            k: self.len(),
            solver: self.training_meta.as_ref().map(|m| m.solver_used),
            atoms: self.atoms.to_row_major(),
            training: self.training_meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DictionaryFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion(file.format_version));
        }
        let atoms = DenseMatrix::from_row_major(file.n, file.k, &file.atoms)?;
        let mut dict = Dictionary::new(atoms, file.class)?;
        dict.training_meta = file.training;
        Ok(dict)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dictionary::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    format_version: u32,
    class: Option<ShapeClass>,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    solver: Option<Coder>,
    atoms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingMeta>,
}

/// Picks `k` distinct non-zero training columns (with replacement when fewer
/// are available) and scales them to unit norm.
pub fn init_dictionary(y: &TrainingSet, k: usize, seed: u64) -> Result<DenseMatrix> {
    let usable: Vec<usize> = (0..y.len())
        .filter(|&j| y.data.column(j).norm() > 0.0)
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if usable.len() >= k {
        sample(&mut rng, usable.len(), k)
            .into_iter()
            .map(|i| usable[i])
            .collect()
    } else {
        log::warn!(
            "only {} usable training columns for {k} atoms; sampling with replacement",
            usable.len()
        );
        (0..k)
            .map(|_| usable[rng.random_range(0..usable.len())])
            .collect()
    };
    let mut d = DMatrix::zeros(y.dim(), k);
    for (dst, &src) in picks.iter().enumerate() {
        let col = y.data.column(src);
        d.column_mut(dst).copy_from(&(col / col.norm()));
    }
    DenseMatrix::new(d)
}

/// `Σ_i ‖y_i - D x_i‖²`.
pub fn objective(y: &DenseMatrix, d: &DenseMatrix, codes: &[SparseCode]) -> f64 {
    column_errors(y, d, codes).iter().sum()
}

fn column_errors(y: &DenseMatrix, d: &DenseMatrix, codes: &[SparseCode]) -> Vec<f64> {
    codes
        .iter()
        .enumerate()
        .map(|(i, x)| (y.column(i) - x.reconstruct(d)).norm_squared())
        .collect()
}

/// Result of one dictionary update.
#[derive(Debug, Clone)]
pub struct DictionaryUpdate {
    pub atoms: DenseMatrix,
    /// Atoms that were unused by every code and got replaced.
    pub replaced: Vec<usize>,
}

/// Solves `min_D Σ ‖y_i - D x_i‖²` with the codes fixed.
///
/// `D = Y Xᵀ (X Xᵀ + λI)⁻¹` with a tiny ridge `λ = 1e-10 · tr(X Xᵀ) / K`.
/// Atoms are then scaled to unit norm and the matching code rows rescaled so
/// `D X` is unchanged. Atoms no code uses are replaced by the worst
/// reconstructed training columns.
pub fn update_dictionary(y: &TrainingSet, codes: &mut [SparseCode]) -> Result<DictionaryUpdate> {
    let n = y.dim();
    let k = codes.first().map_or(0, |c| c.dim());
    if codes.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} codes for {} training columns",
            codes.len(),
            y.len()
        )));
    }
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut cross = DMatrix::<f64>::zeros(n, k);
    let mut used = vec![false; k];
    for (m, x) in codes.iter().enumerate() {
        let ym = y.data.column(m);
        for (i, v) in x.iter() {
            used[i] = true;
            cross.column_mut(i).axpy(v, &ym, 1.0);
            for (j, w) in x.iter() {
                gram[(i, j)] += v * w;
            }
        }
    }
    let trace = gram.trace();
    if trace == 0.0 {
        return Err(Error::EmptyInput("every code is zero"));
    }
    let ridge = 1e-10 * trace / k as f64;
    for i in 0..k {
        gram[(i, i)] += ridge;
    }
    // D G = C  <=>  G Dᵀ = Cᵀ  (G symmetric)
    let dt = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&cross.transpose()),
        None => crate::linalg::lstsq_min_norm_multi(&gram, &cross.transpose()),
    };
    let mut d = dt.transpose();

    for (j, live) in used.iter_mut().enumerate() {
        let norm = d.column(j).norm();
        if *live && norm > 0.0 {
            d.column_mut(j).unscale_mut(norm);
            for x in codes.iter_mut() {
                x.scale_entry(j, norm);
            }
        } else {
            *live = false;
        }
    }

    let dead: Vec<usize> = (0..k).filter(|&j| !used[j]).collect();
    if !dead.is_empty() {
        for x in codes.iter_mut() {
            for &j in &dead {
                x.remove_entry(j);
            }
        }
        let current = DenseMatrix::new(d.clone())?;
        let errors = column_errors(&y.data, &current, codes);
        let picks = worst_columns(y, &errors, dead.len());
        for (&j, &src) in dead.iter().zip(picks.iter()) {
            let col = y.data.column(src);
            d.column_mut(j).copy_from(&(col / col.norm()));
        }
        // no usable columns left: fall back to coordinate vectors
        for &j in dead.iter().skip(picks.len()) {
            d.column_mut(j).fill(0.0);
            d[(j % n, j)] = 1.0;
        }
    }

    Ok(DictionaryUpdate {
        atoms: DenseMatrix::new(d)?,
        replaced: dead,
    })
}

/// Up to `count` distinct non-zero training columns, largest error first.
fn worst_columns(y: &TrainingSet, errors: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..errors.len())
        .filter(|&i| y.data.column(i).norm() > 0.0)
        .collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// Atom of the most coherent pair; the less used one of the two.
fn most_redundant_atom(d: &DenseMatrix, codes: &[SparseCode]) -> usize {
    let g = d.tr_mul(d.as_matrix());
    let mut best = (0, 1, f64::NEG_INFINITY);
    for i in 0..g.nrows() {
        for j in (i + 1)..g.ncols() {
            if g[(i, j)].abs() > best.2 {
                best = (i, j, g[(i, j)].abs());
            }
        }
    }
    let usage = |a: usize| codes.iter().filter(|x| x.get(a) != 0.0).count();
    if usage(best.1) <= usage(best.0) {
        best.1
    } else {
        best.0
    }
}

/// Learned dictionary with the codes of the training columns.
#[derive(Debug, Clone)]
pub struct Learned {
    pub dictionary: Dictionary,
    pub codes: Vec<SparseCode>,
}

/// Alternates sparse coding and dictionary updates and returns the iterate
/// with the lowest objective.
pub fn learn(y: &TrainingSet, cfg: &LearnConfig) -> Result<Learned> {
    cfg.validate()?;
    if y.len() < cfg.atoms {
        log::warn!(
            "{} training columns for {} atoms; expect a poorly determined dictionary",
            y.len(),
            cfg.atoms
        );
    }
    let stop = StoppingRule::sparsity(cfg.max_nonzeros)?;
    let mut atoms = init_dictionary(y, cfg.atoms, cfg.seed)?;
    let scale = y.data.norm_squared();

    let mut best: Option<(f64, DenseMatrix, Vec<SparseCode>)> = None;
    let mut log = Vec::new();
    let mut previous = f64::INFINITY;
    let mut stalls_left = cfg.stall_replacements;

    for it in 0..cfg.max_outer_iters {
        let wrap = |e: Error| Error::Training {
            iteration: it,
            source: Box::new(e),
        };
        let mut codes = sparse_code_all(&atoms, &y.data, &stop, cfg.coder).map_err(wrap)?;
        let objective_coded = objective(&y.data, &atoms, &codes);
        if best.as_ref().is_none_or(|b| objective_coded < b.0) {
            best = Some((objective_coded, atoms.clone(), codes.clone()));
        }
        if codes.iter().all(|c| c.nnz() == 0) {
            log.push(IterationRecord {
                iteration: it,
                objective_coded,
                objective_updated: objective_coded,
                best_objective: objective_coded,
                replaced_atoms: Vec::new(),
            });
            break;
        }

        let update = update_dictionary(y, &mut codes).map_err(wrap)?;
        let objective_updated = objective(&y.data, &update.atoms, &codes);
        if best.as_ref().is_none_or(|b| objective_updated < b.0) {
            best = Some((objective_updated, update.atoms.clone(), codes.clone()));
        }
        let best_objective = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let mut replaced_atoms = update.replaced;
        atoms = update.atoms;

        let improvement = (previous - objective_updated) / previous;
        let solved = objective_updated <= 1e-28 * scale;
        let stalled =
            previous.is_finite() && (improvement.is_nan() || improvement < cfg.objective_tol);
        let mut done = solved;
        if stalled && !solved {
            if stalls_left > 0 {
                stalls_left -= 1;
                let j = most_redundant_atom(&atoms, &codes);
                let errors = column_errors(&y.data, &atoms, &codes);
                if let Some(&src) = worst_columns(y, &errors, 1).first() {
                    let col = y.data.column(src);
                    let mut m = atoms.into_inner();
                    m.column_mut(j).copy_from(&(col / col.norm()));
                    atoms = DenseMatrix::new(m)?;
                    replaced_atoms.push(j);
                }
            } else {
                done = true;
            }
        }
        log.push(IterationRecord {
            iteration: it,
            objective_coded,
            objective_updated,
            best_objective,
            replaced_atoms,
        });
        previous = objective_updated;
        if done {
            break;
        }
    }

    let (final_objective, atoms, codes) = best.expect("at least one iteration runs");
    let mut dictionary = Dictionary::new(atoms, y.class_label)?;
    dictionary.training_meta = Some(TrainingMeta {
        iterations: log.len(),
        final_objective,
        solver_used: cfg.coder,
        objective_log: log,
    });
    Ok(Learned { dictionary, codes })
}

/// Outcome of training one dictionary per class.
#[derive(Debug, Default)]
pub struct ClassTraining {
    pub dictionaries: BTreeMap<ShapeClass, Dictionary>,
    pub failures: BTreeMap<ShapeClass, Error>,
}

/// Runs [`learn`] for every class. Each class gets its own seed derived from
/// `cfg.seed` and its canonical position, so results do not depend on which
/// classes are present or on scheduling.
pub fn train_all_classes(
    datasets: &BTreeMap<ShapeClass, TrainingSet>,
    cfg: &LearnConfig,
) -> ClassTraining {
    let results: Vec<(ShapeClass, Result<Dictionary>)> = datasets
        .par_iter()
        .map(|(&class, set)| {
            let class_cfg = LearnConfig {
                seed: crate::derive_seed(cfg.seed, &[0xD1C7, class.canonical_index() as u64]),
                ..cfg.clone()
            };
            let mut set = set.clone();
            set.class_label = Some(class);
            let r = learn(&set, &class_cfg)
                .map(|l| l.dictionary)
                .map_err(|e| Error::ForClass {
                    class,
                    source: Box::new(e),
                });
            (class, r)
        })
        .collect();
    let mut out = ClassTraining::default();
    for (class, r) in results {
        match r {
            Ok(d) => {
                out.dictionaries.insert(class, d);
            }
            Err(e) => {
                out.failures.insert(class, e);
            }
        }
    }
    out
}

/// Residual of a training set against a dictionary, for diagnostics.
pub fn reconstruction_error(
    y: &DenseMatrix,
    d: &DenseMatrix,
    codes: &[SparseCode],
) -> DVector<f64> {
    DVector::from_vec(column_errors(y, d, codes))
}

//! Meta-dictionary classification by counting atom indices, and the
//! hit-rate matrix that summarizes it per true class.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::shapes::{ClassRegistry, DescriptorVector, ShapeClass};
use crate::solvers::{Coder, StoppingRule};

/// Class dictionaries joined side by side in registry order.
///
/// Columns `l K .. (l + 1) K` (0-based) are the atoms of class `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaDictionary {
    atoms: DenseMatrix,
    block_size: usize,
    registry: ClassRegistry,
}

impl MetaDictionary {
    pub fn atoms(&self) -> &DenseMatrix {
        &self.atoms
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Class slot (0-based) owning atom `atom` (0-based).
    pub fn slot_of(&self, atom: usize) -> usize {
        atom_slot(atom, self.block_size)
    }
}

/// 0-based form of `m = ⌈idx / K⌉` for 1-based `idx`.
pub fn atom_slot(atom: usize, block_size: usize) -> usize {
    atom / block_size
}

pub fn build_meta(
    dicts: &BTreeMap<ShapeClass, Dictionary>,
    registry: &ClassRegistry,
) -> Result<MetaDictionary> {
    if registry.is_empty() {
        return Err(Error::EmptyInput("class registry is empty"));
    }
    let blocks: Vec<&Dictionary> = registry
        .classes()
        .iter()
        .map(|c| dicts.get(c).ok_or(Error::MissingClass(*c)))
        .collect::<Result<_>>()?;
    let (n, k) = (blocks[0].dim(), blocks[0].len());
    for (class, d) in registry.classes().iter().zip(&blocks) {
        if d.dim() != n || d.len() != k {
            return Err(Error::IncompatibleDictionaries(format!(
                "class {class} is {}x{}, expected {n}x{k}",
                d.dim(),
                d.len()
            )));
        }
    }
    let mut m = DMatrix::zeros(n, k * blocks.len());
    for (l, d) in blocks.iter().enumerate() {
        m.columns_mut(l * k, k).copy_from(d.atoms().as_matrix());
    }
    Ok(MetaDictionary {
        atoms: DenseMatrix::new(m)?,
        block_size: k,
        registry: registry.clone(),
    })
}

/// Share of a sample's selected atoms falling into each class block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationVector {
    pub weights: Vec<f64>,
    /// Number of selected atoms `t`; zero means unclassified.
    pub support_count: usize,
}

impl ClassificationVector {
    pub fn is_classified(&self) -> bool {
        self.support_count > 0
    }

    /// Slot with the largest weight (first on ties), `None` when unclassified.
    pub fn argmax(&self) -> Option<usize> {
        if !self.is_classified() {
            return None;
        }
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        Some(best)
    }

    pub fn from_slots(slots: &[usize], classes: usize) -> Self {
        let mut weights = vec![0.0; classes];
        for &s in slots {
            weights[s] += 1.0;
        }
        let t = slots.len();
        if t > 0 {
            weights.iter_mut().for_each(|w| *w /= t as f64);
        }
        ClassificationVector {
            weights,
            support_count: t,
        }
    }
}

/// Sparse-codes `d` against the meta-dictionary with at most `t` atoms and
/// counts the class blocks of the selected atoms. Coefficient magnitudes and
/// signs are ignored.
pub fn classify(
    d: &DescriptorVector,
    meta: &MetaDictionary,
    t: usize,
    coder: Coder,
) -> Result<ClassificationVector> {
    if d.len() != meta.dim() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor has length {}, dictionaries expect {}",
            d.len(),
            meta.dim()
        )));
    }
    let stop = StoppingRule::sparsity(t)?;
    let b = DVector::from_column_slice(&d.values);
    let code = coder.code(&meta.atoms, &b, &stop)?;
    let slots: Vec<usize> = code.support().iter().map(|&i| meta.slot_of(i)).collect();
    Ok(ClassificationVector::from_slots(
        &slots,
        meta.registry.len(),
    ))
}

/// Per-slot mean over the classified vectors of one true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanClassification {
    pub mean: Vec<f64>,
    pub classified: usize,
    pub unclassified: usize,
}

impl MeanClassification {
    pub fn unclassified_rate(&self) -> f64 {
        self.unclassified as f64 / (self.classified + self.unclassified) as f64
    }
}

pub fn mean_classification(vectors: &[ClassificationVector]) -> Result<MeanClassification> {
    let first = vectors
        .first()
        .ok_or(Error::EmptyInput("no classification vectors"))?;
    let mut sum = vec![0.0; first.weights.len()];
    let mut classified = 0;
    for v in vectors.iter().filter(|v| v.is_classified()) {
        if v.weights.len() != sum.len() {
            return Err(Error::DimensionMismatch(
                "classification vectors differ in length".into(),
            ));
        }
        classified += 1;
        for (s, w) in sum.iter_mut().zip(&v.weights) {
            *s += w;
        }
    }
    if classified == 0 {
        return Err(Error::NoClassifiableSamples);
    }
    Ok(MeanClassification {
        mean: sum.into_iter().map(|s| s / classified as f64).collect(),
        classified,
        unclassified: vectors.len() - classified,
    })
}

/// Rows are true classes, columns recognized classes, both in registry order.
///
/// Row `s` is the mean classification vector of class `s` scaled by its
/// classified fraction, so it sums to `1 - unclassified_rate[s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRateMatrix {
    pub classes: Vec<ShapeClass>,
    pub entries: Vec<Vec<f64>>,
    pub unclassified_rate: Vec<f64>,
    pub samples: Vec<usize>,
}

impl HitRateMatrix {
    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.entries[i][i]).collect()
    }

    pub fn mean_diagonal(&self) -> f64 {
        self.diagonal().iter().sum::<f64>() / self.size() as f64
    }

    /// Mass in column `col` outside the diagonal.
    pub fn off_diagonal_column_mass(&self, col: usize) -> f64 {
        (0..self.size())
            .filter(|&r| r != col)
            .map(|r| self.entries[r][col])
            .sum()
    }

    /// Matrix as CSV: a header of class labels, then one row per true class,
    /// entries with six fractional digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\recognized");
        for c in &self.classes {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.entries) {
            write!(out, "{c}").unwrap();
            for v in row {
                write!(out, ",{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            matrix: &'a HitRateMatrix,
            mean_diagonal: f64,
        }
        Ok(serde_json::to_string_pretty(&Report {
            matrix: self,
            mean_diagonal: self.mean_diagonal(),
        })?)
    }

    /// Grayscale rendering with a 10-level ramp, darkest for 1.
    pub fn to_ascii_heatmap(&self) -> String {
        const RAMP: &[u8; 10] = b" .:-=+*#%@";
        let width = self
            .classes
            .iter()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1)
            .max(2);
        let mut out = format!("{:>width$} ", "");
        for c in &self.classes {
            write!(out, "{:>width$}", c.to_string()).unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.entries) {
            write!(out, "{:>width$} ", c.to_string()).unwrap();
            for &v in row {
                let level = ((v.clamp(0.0, 1.0) * 10.0) as usize).min(9);
                let ch = RAMP[level] as char;
                write!(out, "{:>width$}", ch.to_string().repeat(width)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Classifies every test descriptor against `meta` and averages per true class.
pub fn hit_rate_matrix(
    test: &BTreeMap<ShapeClass, Vec<DescriptorVector>>,
    meta: &MetaDictionary,
    t: usize,
    coder: Coder,
) -> Result<HitRateMatrix> {
    let registry = meta.registry();
    if let Some(extra) = test.keys().find(|c| registry.position(**c).is_none()) {
        return Err(Error::MissingClass(*extra));
    }
    let mut entries = Vec::with_capacity(registry.len());
    let mut unclassified_rate = Vec::with_capacity(registry.len());
    let mut samples = Vec::with_capacity(registry.len());
    for &class in registry.classes() {
        let descriptors = test
            .get(&class)
            .filter(|d| !d.is_empty())
            .ok_or(Error::EmptyInput("a class has no test samples"))
            .map_err(|e| Error::ForClass {
                class,
                source: Box::new(e),
            })?;
        let vectors: Vec<ClassificationVector> = descriptors
            .par_iter()
            .map(|d| classify(d, meta, t, coder))
            .collect::<Result<_>>()?;
        let mean = mean_classification(&vectors).map_err(|e| Error::ForClass {
            class,
            source: Box::new(e),
        })?;
        let rate = mean.unclassified_rate();
        entries.push(mean.mean.iter().map(|m| m * (1.0 - rate)).collect());
        unclassified_rate.push(rate);
        samples.push(descriptors.len());
    }
    Ok(HitRateMatrix {
        classes: registry.classes().to_vec(),
        entries,
        unclassified_rate,
        samples,
    })
}

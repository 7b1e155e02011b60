//! End-to-end pipeline: descriptors, per-class training, meta-dictionary
//! evaluation, and the manifest written next to every output.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{build_meta, hit_rate_matrix, HitRateMatrix};
use crate::dataset::{generate_dataset, split, GeneratorConfig, SplitConfig};
use crate::derive_seed;
use crate::dictionary::{train_all_classes, Dictionary, LearnConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::shapes::{describe, ClassRegistry, DescriptorVector, PointCloud, ShapeClass};
use crate::solvers::Coder;

const SPLIT_STREAM: u64 = 0x5B17;
const LEARN_STREAM: u64 = 0x1EA2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Descriptor length `N`.
    pub descriptor_len: usize,
    /// Atoms per class `K`.
    pub atoms: usize,
    /// Sparsity budget `T` for training.
    pub nonzeros: usize,
    /// Sparsity budget at classification time, `nonzeros` when unset.
    pub classify_nonzeros: Option<usize>,
    pub coder: Coder,
    pub train_fraction: f64,
    pub normalize_scale: bool,
    pub max_outer_iters: usize,
    pub objective_tol: f64,
    pub stall_replacements: usize,
    /// Master seed; the split and training streams are derived from it.
    pub seed: u64,
    pub generator: GeneratorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let learn = LearnConfig::default();
        ExperimentConfig {
            descriptor_len: 36,
            atoms: learn.atoms,
            nonzeros: learn.max_nonzeros,
            classify_nonzeros: None,
            coder: learn.coder,
            train_fraction: 0.7,
            normalize_scale: false,
            max_outer_iters: learn.max_outer_iters,
            objective_tol: learn.objective_tol,
            stall_replacements: learn.stall_replacements,
            seed: 0,
            generator: GeneratorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.descriptor_len < 2 {
            return Err(Error::InvalidPruneLength(self.descriptor_len));
        }
        if self.classify_nonzeros == Some(0) {
            return Err(Error::InvalidConfig(
                "classification sparsity must be positive".into(),
            ));
        }
        self.learn_config().validate()?;
        self.split_config().validate()?;
        self.generator.validate()
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            atoms: self.atoms,
            max_nonzeros: self.nonzeros,
            max_outer_iters: self.max_outer_iters,
            objective_tol: self.objective_tol,
            seed: derive_seed(self.seed, &[LEARN_STREAM]),
            coder: self.coder,
            stall_replacements: self.stall_replacements,
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            train_fraction: self.train_fraction,
            seed: derive_seed(self.seed, &[SPLIT_STREAM]),
        }
    }

    pub fn classification_nonzeros(&self) -> usize {
        self.classify_nonzeros.unwrap_or(self.nonzeros)
    }
}

/// Descriptors of every cloud, in input order. Failures stay per cloud.
pub fn describe_all(
    clouds: &[PointCloud],
    len: usize,
    normalize_scale: bool,
) -> Vec<Result<DescriptorVector>> {
    clouds
        .par_iter()
        .map(|c| {
            let d = describe(c, len)?;
            Ok(if normalize_scale {
                d.normalized_scale()
            } else {
                d
            })
        })
        .collect()
}

/// Like [`describe_all`] but fails on the first bad cloud.
pub fn describe_strict(
    clouds: &[PointCloud],
    len: usize,
    normalize_scale: bool,
) -> Result<Vec<DescriptorVector>> {
    describe_all(clouds, len, normalize_scale)
        .into_iter()
        .zip(clouds)
        .map(|(r, c)| r.map_err(|e| Error::InvalidCloud(format!("cloud {:?}: {e}", c.source_id()))))
        .collect()
}

pub fn group_by_class(
    descriptors: Vec<DescriptorVector>,
) -> BTreeMap<ShapeClass, Vec<DescriptorVector>> {
    let mut out: BTreeMap<ShapeClass, Vec<DescriptorVector>> = BTreeMap::new();
    for d in descriptors {
        out.entry(d.class_label).or_default().push(d);
    }
    out
}

/// Learns one dictionary per class. Any class failure aborts the run.
pub fn train_dictionaries(
    train: &BTreeMap<ShapeClass, Vec<DescriptorVector>>,
    cfg: &LearnConfig,
) -> Result<BTreeMap<ShapeClass, Dictionary>> {
    let sets = train
        .iter()
        .map(|(&c, d)| Ok((c, TrainingSet::from_descriptors(d)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut outcome = train_all_classes(&sets, cfg);
    match outcome.failures.pop_first() {
        Some((_, e)) => Err(e),
        None => Ok(outcome.dictionaries),
    }
}

/// Hit-rate matrix of `test` against the given class dictionaries.
pub fn evaluate(
    dictionaries: &BTreeMap<ShapeClass, Dictionary>,
    test: &BTreeMap<ShapeClass, Vec<DescriptorVector>>,
    nonzeros: usize,
    coder: Coder,
) -> Result<HitRateMatrix> {
    let registry = ClassRegistry::new(test.keys().copied());
    let meta = build_meta(dictionaries, &registry)?;
    hit_rate_matrix(test, &meta, nonzeros, coder)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub matrix: HitRateMatrix,
    pub dictionaries: BTreeMap<ShapeClass, Dictionary>,
    pub train_size: usize,
    pub test_size: usize,
}

/// Split, describe, train and evaluate on the given clouds.
pub fn run_experiment(clouds: &[PointCloud], cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (train, test) = split(clouds, &cfg.split_config())?;
    let train_d = group_by_class(describe_strict(
        &train,
        cfg.descriptor_len,
        cfg.normalize_scale,
    )?);
    let test_d = group_by_class(describe_strict(
        &test,
        cfg.descriptor_len,
        cfg.normalize_scale,
    )?);
    let dictionaries = train_dictionaries(&train_d, &cfg.learn_config())?;
    let matrix = evaluate(
        &dictionaries,
        &test_d,
        cfg.classification_nonzeros(),
        cfg.coder,
    )?;
    Ok(ExperimentOutcome {
        matrix,
        dictionaries,
        train_size: train.len(),
        test_size: test.len(),
    })
}

/// [`run_experiment`] on a freshly generated dataset.
pub fn run_synthetic(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let clouds = generate_dataset(&cfg.generator)?;
    run_experiment(&clouds, cfg)
}

/// Record written next to every command output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }
}

//! Shape recognition with per-class sparse dictionaries.
//!
//! An ordered, closed 2D point cloud is turned into a fixed-length descriptor
//! (centroid distances, rotated to start at the farthest point and resampled).
//! A dictionary is learned per shape class; the class dictionaries are joined
//! into a meta-dictionary and an unknown descriptor is classified by counting
//! which class blocks its sparse code draws atoms from.

pub mod classifier;
pub mod dataset;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod shapes;
pub mod solvers;

pub use classifier::{
    build_meta, classify, hit_rate_matrix, mean_classification, ClassificationVector,
    HitRateMatrix, MeanClassification, MetaDictionary,
};
pub use dataset::{
    generate_circle, generate_dataset, generate_polygon, load_clouds, save_clouds, split,
    GeneratorConfig, SplitConfig,
};
pub use dictionary::{
    init_dictionary, learn, train_all_classes, update_dictionary, Dictionary, LearnConfig,
    TrainingSet,
};
pub use error::{Error, ErrorKind, Result};
pub use linalg::DenseMatrix;
pub use shapes::{
    centroid, describe, distance_vector, prune_distance_vector, sort_distance_vector,
    ClassRegistry, DescriptorVector, DistanceVector, PointCloud, ShapeClass, Stage,
};
pub use solvers::{
    lars, omp, sparse_code_batch, Coder, LarsPrecondition, SparseCode, StoppingRule,
};

/// Mixes a base seed with a path of integers into an independent stream seed
/// (splitmix64 finalizer).
pub(crate) fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

use std::path::PathBuf;

use crate::shapes::ShapeClass;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error category, used by the command-line tool to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate-cloud: all points of the cloud coincide")]
    DegenerateCloud,
    #[error("invalid-cloud: {0}")]
    InvalidCloud(String),
    #[error("invalid-prune-length: descriptor length must be at least 2, got {0}")]
    InvalidPruneLength(usize),
    #[error("invalid distance vector: {0}")]
    InvalidDistanceVector(String),
    #[error("zero-atom: column {0} has zero norm")]
    ZeroAtom(usize),
    #[error("unnormalized-atom: column {index} has norm {norm}, expected 1")]
    UnnormalizedAtom { index: usize, norm: f64 },
    #[error("degenerate-dictionary: Gram matrix of the first active set is singular")]
    DegenerateDictionary,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty-training-set: every training column has zero norm")]
    EmptyTrainingSet,
    #[error("sparse coding failed for {} column(s), first at column {}: {}", .failures.len(), .failures[0].0, .failures[0].1)]
    BatchFailed { failures: Vec<(usize, String)> },
    #[error("training failed at outer iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("class {class}: {source}")]
    ForClass {
        class: ShapeClass,
        #[source]
        source: Box<Error>,
    },
    #[error("incompatible-dictionaries: {0}")]
    IncompatibleDictionaries(String),
    #[error("missing dictionary for class {0}")]
    MissingClass(ShapeClass),
    #[error("no-classifiable-samples: every sample was left unclassified")]
    NoClassifiableSamples,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("class-too-small: class {0} has fewer than 2 samples")]
    ClassTooSmall(ShapeClass),
    #[error("unknown shape class label {0:?}")]
    UnknownClass(String),
    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("unsupported format version {0}")]
    FormatVersion(u32),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::InvalidPruneLength(_) => ErrorKind::Usage,
            Error::ZeroAtom(_)
            | Error::UnnormalizedAtom { .. }
            | Error::DegenerateDictionary
            | Error::NonFinite(_)
            | Error::BatchFailed { .. } => ErrorKind::Numerical,
            Error::Training { source, .. } | Error::ForClass { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}

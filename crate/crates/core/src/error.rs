use std::path::PathBuf;

/// Errors produced by the pipeline primitives.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("region {region:?} has no voxel series")]
    EmptyRegion { region: String },

    #[error("length mismatch in {context}: expected {expected}, found {found}")]
    LengthMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("window length {window_len} exceeds series length {scans}")]
    WindowTooLong { window_len: usize, scans: usize },

    #[error("scan {scan} is not covered by any task span")]
    UncoveredScan { scan: usize },

    #[error("{levels} decomposition levels need at least {required} samples, signal has {len} (max levels for this length: {max})")]
    TooManyLevels {
        levels: usize,
        len: usize,
        required: usize,
        max: usize,
    },

    #[error("sub-band index {index} out of range 0..={max}")]
    SubbandOutOfRange { index: usize, max: usize },

    #[error("normal equations for region {region} are singular; use lambda > 0")]
    SingularSystem { region: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at epoch {epoch} ({detail}); try a smaller learning rate")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("cluster count {k} must be in 1..={points}")]
    InvalidClusterCount { k: usize, points: usize },

    #[error("empty member set")]
    EmptyCluster,

    #[error("generator matrix for task {task:?} is not stable (spectral radius bound {bound:.4} >= 1)")]
    UnstableGenerator { task: String, bound: f64 },

    #[error("malformed {what} at {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            path: path.into(),
            detail: detail.into(),
        }
    }
}

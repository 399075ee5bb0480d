use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("matrix data has {found} entries, expected {expected}")]
    BadMatrixData { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("loss evaluated to a non-finite value ({0})")]
    NonFiniteLoss(f64),

    #[error("loss must be a 1x1 node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("gradient contains non-finite entries")]
    NonFiniteGradient,

    #[error("inverse softplus requires a positive argument, got {0}")]
    InverseOfNonPositive(f64),

    #[error("unknown synthetic dataset id {0} (expected 1..=5)")]
    InvalidSyntheticId(u32),

    #[error("too few rows: need at least {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },

    #[error("k-means asked for {k} clusters on {n} points")]
    KTooLarge { k: usize, n: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("CSV parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumericCell {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("column {0} has zero variance and cannot be standardized")]
    ConstantColumn(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset `{key}` not found in manifest {path}")]
    UnknownDataset { key: String, path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

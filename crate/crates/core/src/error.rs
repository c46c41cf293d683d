use thiserror::Error;

/// Errors produced by the migration laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no feasible initial placement for snapshot {index} (seed {seed}) after {attempts} attempts")]
    GenerationFailed { seed: u64, index: u64, attempts: u32 },

    #[error("instance {instance} cannot be placed on any server")]
    NoFeasiblePlacement { instance: usize },

    #[error("search space of {size:.3e} assignments exceeds the enumeration limit of {limit:.0e}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("learning rate {value} outside [{lo}, {hi}]")]
    OutOfBounds { value: f64, lo: f64, hi: f64 },

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

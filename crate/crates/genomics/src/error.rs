use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cell that violates a file invariant; row and column are 1-based
    /// positions in the data (header excluded).
    #[error("{file}: row {row}, column {column} ({header}): {detail}")]
    InvalidCell {
        file: String,
        row: usize,
        column: usize,
        header: String,
        detail: String,
    },

    #[error("unknown genotype call {call:?} at locus {locus}")]
    UnknownCall { locus: String, call: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Core(#[from] dualproj_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

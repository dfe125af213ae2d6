use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum TtError {
    #[error("coordinate {index} out of range for mode {mode} with extent {extent}")]
    Coordinate {
        mode: usize,
        index: usize,
        extent: usize,
    },
    #[error("tensor would hold {entries} entries, above the cap of {cap}")]
    Size { entries: u128, cap: u128 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("reference tensor has zero norm")]
    DegenerateReference,
    #[error("singular value {sigma:e} at the rank boundary of core {core} cannot be inverted")]
    DegenerateTrim { core: usize, sigma: f64 },
    #[error("density has nonpositive total mass {0:e}")]
    DegenerateDensity(f64),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("value {value} out of range at row {row}, column {col}")]
    Range { row: usize, col: usize, value: String },
    #[error("numerical inconsistency: radicand {0:e}")]
    Numerical(f64),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TtError>;

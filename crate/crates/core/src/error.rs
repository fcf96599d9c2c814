use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("LP solver did not terminate within {0} iterations")]
    LpIterationLimit(usize),

    #[error("set is empty: {0}")]
    EmptySet(String),

    #[error("set is unbounded: {0}")]
    Unbounded(String),

    #[error("projection produced {rows} intermediate rows (cap {cap}); reduce the dimension, the horizon or the set complexity")]
    ProjectionBlowUp { rows: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

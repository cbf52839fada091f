use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quench spec: {0}")]
    InvalidSpec(String),
    #[error("k = {k} is not in the momentum set for N = {n}")]
    InvalidMode { k: f64, n: usize },
    #[error("control field has {got} samples, grid needs {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("trajectory was recorded without the Y-operator stream")]
    MissingStream,
    #[error("cat overlap of mode k = {k} is {overlap:e}, too small for the ratio form")]
    NearZeroOverlap { k: f64, overlap: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("N = {n} exceeds the dense-simulation limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HxdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("sample point {index} lies outside the unit cube")]
    OutOfCube { index: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("singular formula: {0}")]
    Singular(String),

    #[error("quadrature too coarse: {nodes} nodes cannot resolve level {level}")]
    Aliasing { nodes: usize, level: u32 },

    #[error("positive part of the density has numerically zero mass")]
    ZeroMass,

    #[error("computation too large: {0}")]
    TooLarge(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HxdError>;

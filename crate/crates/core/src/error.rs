//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("pose lies inside an obstacle")]
    PoseInObstacle,
    #[error("floorplan generation failed after {0} attempts")]
    GenerationFailed(usize),
    #[error("goal unreachable")]
    Unreachable,
    #[error("empty dataset: {0}")]
    EmptyCorpus(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("discriminator collapsed: {0}")]
    Collapsed(String),
    #[error("adaptation stage diverged: {0}")]
    StageDiverged(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("log schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("zero steps in episode result")]
    ZeroSteps,
    #[error("invalid path length: {0}")]
    InvalidLength(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

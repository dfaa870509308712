use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("measure has no points")]
    EmptyMeasure,
    #[error("nonpositive weight {weight} at point {index}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty index set")]
    EmptyIndexSet,
    #[error("index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("forced candidate radius {forced} is below half the largest radius {max}")]
    ForcedTooSmall { forced: f64, max: f64 },
    #[error("root cube is not doubling; lower k_min")]
    NonDoublingRoot,
    #[error("level {0} is not valid for this filtration")]
    InvalidLevel(usize),
    #[error("atom {0} has no parent")]
    NoParent(usize),
    #[error("all fields are constant")]
    AllConstant,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no doubling ball in the family")]
    NoDoublingBall,
    #[error("field belongs to a different measure")]
    ForeignField,
}

pub type Result<T> = std::result::Result<T, Error>;

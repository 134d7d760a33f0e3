use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("convexity lost at node {node} (x = {x:?}): det = {det:e}, trace = {trace:e}")]
    Convexity { node: usize, x: Vec<f64>, det: f64, trace: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

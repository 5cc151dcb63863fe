use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidMeshParameters(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh topology: {0}")]
    Topology(String),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("field lives on a different space than expected: {0}")]
    SpaceMismatch(String),

    #[error("point ({0}, {1}) lies outside the domain")]
    PointOutside(f64, f64),

    #[error("unknown boundary tag {0}")]
    UnknownTag(u32),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("linear residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTolerance { residual: f64, tolerance: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("nonpositive error value {0} in rate table")]
    NonPositiveError(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by samplers, estimators and the experiment harness.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("walk did not leave the ball within {max_steps} steps")]
    MaxStepsExceeded { max_steps: usize },

    #[error("start point {0:?} is not inside the ball")]
    StartOutsideBall(Vec<i32>),

    #[error("path never leaves the ball")]
    NoExit,

    #[error("step from {from:?} to {to:?} is not a unit lattice step")]
    NonAdjacentStep { from: Vec<i32>, to: Vec<i32> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0}; only 2 and 3 are supported")]
    UnsupportedDimension(usize),

    #[error("coordinate {0} exceeds the packed coordinate range")]
    CoordinateOverflow(i64),

    #[error("invalid radius {0}")]
    InvalidRadius(f64),

    #[error("path revisits a site")]
    NotSimple,

    #[error("empty path")]
    EmptyPath,

    #[error("no accepted pair within {attempts} attempts at radius {radius}")]
    AttemptsExhausted { attempts: u64, radius: f64 },

    #[error("only {found} global cut indices available, {needed} requested")]
    PieceShortfall { needed: usize, found: usize },

    #[error("path does not cross from B({m}) to the boundary of B({n})")]
    NoCrossing { m: f64, n: f64 },

    #[error("estimate grid does not cover 1..={0}")]
    InsufficientGrid(usize),

    #[error("vertices {a} and {b} are not connected")]
    Disconnected { a: usize, b: usize },

    #[error("vertex {0} is not in the graph")]
    UnknownVertex(usize),

    #[error("conjugate gradient did not reach tolerance {tol:e} after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64, tol: f64 },

    #[error("graph is not a valid input: {0}")]
    InvalidGraph(String),

    #[error("fit needs at least 4 records spanning 2 octaves")]
    InsufficientSpan,

    #[error("non-positive mean {mean} at n = {n}; cannot take logarithms")]
    NonPositiveMean { n: f64, mean: f64 },

    #[error("series grids differ")]
    GridMismatch,

    #[error("need at least {needed} samples, got {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("run interrupted after {completed} of {total} cells")]
    Interrupted { completed: usize, total: usize },

    #[error("manifest {path} is corrupt: {reason}")]
    ManifestCorrupt { path: PathBuf, reason: String },

    #[error("results missing under {0}")]
    ResultsMissing(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

use std::io;

/// Errors raised anywhere in the optimization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: must be {bound}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        bound: &'static str,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Cholesky breakdown. Upstream this usually means a density or
    /// degradation value left its admissible range.
    #[error("matrix is singular or indefinite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("uncertainty set is infeasible: {0}")]
    InfeasibleSet(String),

    #[error("degradation value {value} of element {element} is not strictly inside (0, 1)")]
    BarrierDomain { element: usize, value: f64 },

    #[error("barrier Newton solver did not converge after {iterations} iterations (mu = {mu:e}, residual = {residual:e})")]
    NonConvergence {
        iterations: usize,
        mu: f64,
        residual: f64,
    },

    #[error("inner solution is stale: {0}")]
    StaleInnerSolution(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("override `{key}`: {message}")]
    Override { key: String, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: impl ToString, bound: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            bound,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

use thiserror::Error;

/// Errors produced by the solvers, graph construction and data IO.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape { context: &'static str, expected: String, found: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("solver diverged: {message}")]
    Diverged {
        message: String,
        /// Last iterate whose entries were all finite.
        last_finite: Option<Box<crate::ssnal::Iterate>>,
    },

    #[error("line search failed after {steps} backtracking steps (directional derivative {slope:e})")]
    LineSearch { steps: usize, slope: f64 },

    #[error("dual variable infeasible: column {edge} has norm {norm:e} > bound {bound:e}")]
    Infeasible { edge: usize, norm: f64, bound: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::Shape { context, expected: expected.to_string(), found: found.to_string() }
}

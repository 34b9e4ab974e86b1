use thiserror::Error;

/// Errors raised by model construction, rule evaluation and spectrum analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("spectrum error: {0}")]
    Spectrum(String),

    #[error("eigenvalues {index} and {next} are not distinct (relative gap {gap:e})", next = index + 1)]
    Distinctness { index: usize, gap: f64 },

    #[error("matrix is not symmetric (max residual {residual:e})")]
    Symmetry { residual: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("pairs are not orthonormal (Gram deviation {deviation:e})")]
    Orthonormality { deviation: f64 },

    #[error("singular rule evaluation: |{quantity}| = {value:e} below guard")]
    Singularity { quantity: &'static str, value: f64 },

    #[error("shape error: expected square matrix, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },

    #[error("index error: {0}")]
    Index(String),
}

pub type Result<T> = std::result::Result<T, Error>;

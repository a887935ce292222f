use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument left the (interior of the) domain of a generator function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix/vector shapes do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Iterative solver hit its iteration cap before reaching tolerance.
    #[error("maximum iterations exceeded: residual {residual:.3e} after {iterations} iterations")]
    MaxIterations {
        residual: f64,
        iterations: usize,
        /// Residual per sweep, so callers can inspect stagnation.
        trace: Vec<f64>,
    },

    /// The requested construction has no defined answer for this input.
    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    /// Generator does not satisfy a hypothesis required by the operation.
    #[error("generator error: {0}")]
    Generator(String),

    /// Armijo backtracking underflowed its step size.
    #[error("line search failure in {block} block: step underflowed below {alpha_min:.1e} (E_lambda = {objective:.6e})")]
    LineSearch {
        block: &'static str,
        alpha_min: f64,
        objective: f64,
    },

    /// Alternating projection (Dykstra) did not converge within its round cap.
    #[error("projection did not converge: residual {residual:.3e} after {rounds} rounds")]
    Convergence { residual: f64, rounds: usize },

    /// Symmetric eigendecomposition failed or input was not symmetric.
    #[error("eigendecomposition failure: {0}")]
    Eigen(String),

    /// Input data violated a schema (row/column diagnostics included).
    #[error("data error: {0}")]
    Data(String),

    /// File I/O problem; includes the offending path.
    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },

    /// Configuration parameter outside its allowed range.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

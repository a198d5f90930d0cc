use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent input values (dimensions, signs, non-finite entries).
    #[error("invalid input: {0}")]
    Input(String),

    /// A model document did not match the expected schema.
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    /// A state lies outside the operating domain where the input matrix is defined.
    #[error("state outside the operating domain: {0}")]
    Domain(String),

    #[error("matrix is numerically singular (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Newton iterate left the operating domain at iteration {iteration}")]
    DomainExit { iteration: usize },

    /// No real equilibrium exists; carries the existence power limit when one is known.
    #[error("no real equilibrium (discriminant {discriminant:e})")]
    NoEquilibrium { discriminant: f64, p_e_max: Option<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("mode unavailable: {0}")]
    ModeUnavailable(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

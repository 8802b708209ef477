use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical primitives, the theory engine and the
/// simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite integrand value {value} at node {node}")]
    NonFiniteNode { node: f64, value: f64 },

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("quadrature did not converge within {panels} panels (estimate {estimate}, error {error})")]
    NoConvergence { estimate: f64, error: f64, panels: usize },

    #[error("linear estimator is ineffective: integral of m1^2/m0 is {value}")]
    IneffectiveLinear { value: f64 },

    #[error("subcritical: {0}")]
    Subcritical(String),

    #[error("degenerate correlation between linear and spectral estimates (nu = {nu})")]
    DegenerateCorrelation { nu: f64 },

    #[error("numerical consistency: {0}")]
    Consistency(String),

    #[error("iteration unstable at t = {t}: {reason}")]
    Instability { t: usize, reason: String },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

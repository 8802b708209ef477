//! Estimation in two-component mixed generalized linear models.
//!
//! The crate has two halves. The theory side ([`theory`]) evaluates the
//! high-dimensional limits of the linear, spectral and combined estimators
//! by one-dimensional quadrature and root finding. The simulation side
//! ([`estimators`], [`gamp`], [`experiments`]) draws finite instances and
//! measures the same quantities so the two can be compared.

pub mod acceptance;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod gamp;
pub mod models;
pub mod numerics;
pub mod preprocess;
pub mod theory;

pub use error::{Error, Result};
pub use models::{LinkKind, LinkModel};
pub use numerics::QuadratureSpec;
pub use preprocess::Preprocessor;

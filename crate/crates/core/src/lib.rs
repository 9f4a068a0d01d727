//! Anisotropic tail-adaptive flows (ATAF).
//!
//! Flow-based variational inference where the base distribution carries one
//! learnable StudentT degrees-of-freedom parameter per dimension, together
//! with a tail-diagnostics suite (directional Hill estimation, tail-class
//! discrimination, KS testing) and sampling-based closure checks.

pub mod autodiff;
pub mod dist;
pub mod flows;
pub mod snapshot;
pub mod special;
pub mod tails;
pub mod targets;
pub mod vi;

use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A non-finite value appeared while recording the tape.
    #[error("numeric overflow at tape node {node}")]
    NumericOverflow { node: usize },
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Caller misuse (bad configuration, out-of-range ids, unknown names).
    #[error("usage error: {0}")]
    Usage(String),
    /// Not enough data to run an estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Training diverged and was aborted.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Crate-wide error type.
//!
//! Every failure carries enough structure (grid node, decision-maker index,
//! sample path) for callers to emit machine-readable diagnostics; `kind`
//! strings are stable and used verbatim in the CLI error JSON.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("{what} is not positive definite at node {node} (min eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite {
        what: String,
        node: usize,
        eigenvalue: f64,
    },

    #[error("{what} is not positive semidefinite (min eigenvalue {eigenvalue:e})")]
    NotPsd { what: String, eigenvalue: f64 },

    #[error("invalid covariance: min eigenvalue {eigenvalue:e} below tolerance")]
    InvalidCovariance { eigenvalue: f64 },

    #[error("integration diverged: non-finite value first produced at node {node}")]
    IntegrationDiverged { node: usize },

    #[error("singular inner matrix R + sum s_i' K s_i at node {node}")]
    SingularInnerMatrix { node: usize },

    #[error("singular mean-strategy coupling matrix at node {node}")]
    SingularCoupling { node: usize },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("decision maker index {index} out of range (N = {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("precondition violated: {what}")]
    Precondition { what: String },

    #[error(
        "information ordering violated: centralized cost {centralized} exceeds decentralized {decentralized}"
    )]
    CostOrdering {
        centralized: f64,
        decentralized: f64,
    },

    #[error("non-finite state on path {path} at node {node}")]
    NonFiniteState { path: usize, node: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("invalid configuration: {what}")]
    Config { what: String },
}

impl Error {
    /// Stable machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::NotPsd { .. } => "not_psd",
            Error::InvalidCovariance { .. } => "invalid_covariance",
            Error::IntegrationDiverged { .. } => "integration_diverged",
            Error::SingularInnerMatrix { .. } => "singular_inner_matrix",
            Error::SingularCoupling { .. } => "singular_coupling",
            Error::NonConvergence { .. } => "non_convergence",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::Precondition { .. } => "precondition",
            Error::CostOrdering { .. } => "cost_ordering",
            Error::NonFiniteState { .. } => "non_finite_state",
            Error::EmptyEnsemble => "empty_ensemble",
            Error::Config { .. } => "config",
        }
    }

    /// Grid node associated with the failure, when there is one.
    pub fn node(&self) -> Option<usize> {
        match self {
            Error::NotPositiveDefinite { node, .. }
            | Error::IntegrationDiverged { node }
            | Error::SingularInnerMatrix { node }
            | Error::SingularCoupling { node }
            | Error::NonFiniteState { node, .. } => Some(*node),
            _ => None,
        }
    }

    /// Sample path associated with the failure, when there is one.
    pub fn path(&self) -> Option<usize> {
        match self {
            Error::NonFiniteState { path, .. } => Some(*path),
            _ => None,
        }
    }

    /// True for errors caused by malformed problem data rather than a solve.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NotPsd { .. }
                | Error::InvalidCovariance { .. }
                | Error::IndexOutOfRange { .. }
                | Error::Precondition { .. }
                | Error::Config { .. }
        )
    }
}

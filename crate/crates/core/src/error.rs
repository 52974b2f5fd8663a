use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A linear system that must be strictly convex hit a non-positive pivot.
    #[error("subproblem not strictly convex: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-unique multiplier: {0}")]
    NonUniqueMultiplier(String),

    #[error("iteration cap of {cap} reached in {context}")]
    IterationCap { context: String, cap: usize },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("pointwise bound undefined (sigma_alpha = 1) for alpha = {0}")]
    PointwiseUndefined(f64),

    #[error("certification failed: `{check}` violated at k = {k}")]
    Certification { check: String, k: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }
}

pub(crate) fn check_dim(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(context, expected, got))
    }
}

use alloc::string::String;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input contains non-finite entries")]
    NonFinite,

    #[error("shape mismatch in {context}: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("rank {rank} exceeds the network's minimum width {min_width}")]
    InfeasibleFactorization { rank: usize, min_width: usize },

    #[error("whitening requires full row rank, found rank {rank} of {rows}")]
    WhiteningInfeasible { rank: usize, rows: usize },

    #[error("data matrix is not whitened")]
    NotWhitened,

    #[error("X X^T is singular (rank {rank} of {rows})")]
    SingularDesign { rank: usize, rows: usize },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("trajectory time grids do not match")]
    MismatchedGrid,
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}

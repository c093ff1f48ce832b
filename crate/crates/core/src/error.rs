use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e})")]
    NonHermitian { asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("length mismatch: state has {expected} points, function has {found} values")]
    LengthMismatch { expected: usize, found: usize },

    #[error("postselection rate is zero ({rate:e})")]
    ZeroSelectionRate { rate: f64 },

    #[error("postselector spectrum must lie in [0, 1], found eigenvalue {eigenvalue}")]
    InvalidPostselector { eigenvalue: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pre- and postselected states are orthogonal (|<f|i>|^2 = {overlap:e}); weak value undefined")]
    OrthogonalPrePost { overlap: f64 },

    #[error("integrator unstable: {unstable_steps} of {steps} steps exceeded the repair threshold; reduce dt")]
    StepUnstable { unstable_steps: usize, steps: usize },

    #[error("all {runs} runs were discarded by postselection")]
    NoAcceptedRuns { runs: usize },

    #[error("{failed} of {total} trajectories did not meet the collapse criterion")]
    Unconverged { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

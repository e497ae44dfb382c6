use thiserror::Error;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error(transparent)]
    Core(#[from] bae_core::CoreError),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("feature set is empty")]
    EmptyFeatureSet,

    #[error("sample is empty")]
    EmptySample,

    #[error("feature points {0} and {1} coincide")]
    DuplicateFeature(usize, usize),

    #[error("second-moment matrix is singular (min eigenvalue {min_eig:e}); reduce the feature dimension before building the policy")]
    SingularSecondMoment { min_eig: f64 },

    #[error("{0}")]
    Invalid(String),
}

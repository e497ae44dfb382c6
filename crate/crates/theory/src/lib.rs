//! Theory kernel for benign autoencoding: Bregman divergence and projection,
//! structural verifiers for optimal policies, a K-finite partition solver
//! with an exhaustive oracle, and the two closed-form optimal policies
//! (linear spectral projection and sphere map).

pub mod bregman;
pub mod closed_form;
pub mod error;
pub mod oracle;
pub mod solver;
pub mod utility;

pub use bregman::{
    bregman_divergence, bregman_project, check_gradient_monotone, check_maximal,
    check_projection_idempotent, check_ray_concavity, check_unbiased, check_w_monotone,
    compressibility_dimension, Policy,
};
pub use closed_form::{
    check_sphere_condition, quadratic_policy, quadratic_policy_known_moments, sphere_policy,
    verify_policy, QuadraticPolicy, SpherePolicy,
};
pub use error::TheoryError;
pub use oracle::brute_force_oracle;
pub use solver::{
    assign_cells, jensen_direction_probe, solve, solve_traced, solve_weighted, update_actions,
    InitStrategy, PartitionPolicy, SolveOptions,
};
pub use utility::{FeatureSet, UtilityFunction};

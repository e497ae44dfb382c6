//! Shared numeric primitives for the BAE toolkit: dense row-major matrices,
//! deterministic seeded RNG streams, dataset containers, and a symmetric
//! eigendecomposition with inertia counting.

pub mod dataset;
pub mod error;
pub mod linalg;
pub mod rng;

pub use dataset::{Dataset, Task};
pub use error::CoreError;
pub use linalg::{inertia, sym_eigen, EigenDecomposition, Matrix, Vector};
pub use rng::{Rng, Stream};

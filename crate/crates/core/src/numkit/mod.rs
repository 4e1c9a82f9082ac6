//! Dense real-matrix arithmetic, seeded random streams, and probability
//! primitives.
//!
//! Everything here is `f64`. Matrices are row-major and immutable once
//! built; random streams are owned by exactly one caller at a time.

mod mat;
mod prob;
mod rng;

pub use mat::{cholesky, dot, gaussian_logpdf, norm2, solve_spd, solve_with_factor, Mat};
pub use prob::{
    gaussian_logpdf_scalar, log_softmax, logsumexp, poisson_logpmf, softmax, PmfVec,
};
pub use rng::{derive_stream, mix64, RngStream};

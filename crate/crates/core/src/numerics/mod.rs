//! Dense linear algebra, normalization and seeded randomness.

mod matrix;
mod rng;
mod scalar;
mod svd;

pub use matrix::{cosine, dot, l2_normalize, matmul, norm, Matrix, Vector};
pub use rng::Rng;
pub use scalar::{Scalar, NORM_EPS};
pub use svd::{svd, Svd, MAX_DIM as SVD_MAX_DIM, MAX_SWEEPS as SVD_MAX_SWEEPS};

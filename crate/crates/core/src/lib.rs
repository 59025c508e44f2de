//! Diachronic cross-modal embeddings.
//!
//! Images and texts are projected into one unit-norm space by two small
//! networks that share a time-embedding layer, so every projection depends on
//! the instant it is made at. Training uses a ranking loss that separates
//! categories and pushes apart same-category items that are far apart in
//! time. A binned baseline trains one static model per month and chains
//! orthogonal Procrustes rotations between adjacent months.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64`/`*32` aliases below name the concrete instantiations.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{Rng, Scalar};

pub type Matrix64 = numerics::Matrix<f64>;
pub type Matrix32 = numerics::Matrix<f32>;
pub type Vector64 = numerics::Vector<f64>;
pub type Vector32 = numerics::Vector<f32>;
pub type Instance64 = dataset::Instance<f64>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type BinnedModel64 = trainer::BinnedModel<f64>;
pub type BinnedModel32 = trainer::BinnedModel<f32>;

//! Spatial functional ANOVA with SPDE-based Gaussian Markov random fields.
//!
//! The geometry and sparse linear algebra layers (`mesh`, `sparse`,
//! `cholesky`, `spde`) are generic over the scalar type; the inference and
//! application layers work in `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cholesky;
pub mod error;
pub mod fanova;
pub mod lgm;
pub mod mesh;
pub mod scalar;
pub mod simstudy;
pub mod sparse;
pub mod spde;
pub mod wind;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh = mesh::Mesh<f64>;
pub type MeshF32 = mesh::Mesh<f32>;
pub type Projector = mesh::Projector<f64>;
pub type CscMatrix = sparse::CscMatrix<f64>;
pub type SparseSymmetric = sparse::SparseSymmetric<f64>;
pub type SparseSymmetricF32 = sparse::SparseSymmetric<f32>;
pub type CholeskyFactor = cholesky::CholeskyFactor<f64>;
pub type CholeskyFactorF32 = cholesky::CholeskyFactor<f32>;
pub type SpdeOperator = spde::SpdeOperator<f64>;
pub type BasisSet = spde::BasisSet<f64>;

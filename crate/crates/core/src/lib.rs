//! Robust sparse blind source separation.
//!
//! Observations are modelled as `X = A S + O + N`: a mixture of sparse
//! sources `S` through a mixing matrix `A`, plus sparse gross outliers `O`
//! and Gaussian noise `N`. The crate provides
//!
//! - [`gmca::gmca`]: sparse separation without an outlier model,
//! - [`robust::nrgmca`]: joint estimation of `A`, `S` and `O`,
//! - [`robust::rgmca`]: the same with outlier-driven sample weighting,
//! - [`pcp::pcp_gmca`]: low-rank + sparse preprocessing followed by GMCA,
//!
//! together with seeded scene generation ([`datagen`]), the mixing-matrix
//! error criterion ([`metrics`]) and a Monte-Carlo harness ([`bench`]).
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod datagen;
pub mod error;
pub mod gmca;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pcp;
pub mod robust;
mod scalar;

pub use error::{Error, Result};
pub use linalg::{Matrix, SvdFactors};
pub use model::{MixingScene, SeparationResult, SolverParams};
pub use scalar::Scalar;

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type SceneF64 = MixingScene<f64>;
pub type SceneF32 = MixingScene<f32>;
pub type SeparationF64 = SeparationResult<f64>;
pub type SeparationF32 = SeparationResult<f32>;

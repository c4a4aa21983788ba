//! Dense linear algebra and robust statistics shared by every solver.

mod matrix;
mod ops;
mod stats;
mod svd;

pub use matrix::Matrix;
pub use ops::{column_l1_norms, soft_threshold, soft_threshold_uniform};
pub use stats::{mad_sigma, median, MAD_CONSISTENCY};
pub use svd::{pseudo_inverse, svd, SvdFactors};

/// Default relative rank tolerance for [`pseudo_inverse`].
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

//! Deterministic numerical kernel shared by every other module.

mod kernel;
mod linalg;
pub mod sampling;
pub mod search;
pub mod special;

pub use kernel::{rbf_kernel, BoxDomain, RbfKernelParams, SquaredExponential};
pub use linalg::{cholesky_solve, symmetric_eigenvalues, Cholesky, Matrix, PsdMatrix};
pub use special::{
    inverse_mills_ratio, inverse_std_normal_cdf, log_std_normal_cdf, std_normal_cdf,
    std_normal_pdf,
};
pub(crate) use linalg::{dot, norm};

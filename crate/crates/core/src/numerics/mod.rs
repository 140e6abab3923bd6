//! Scalar special functions, quadrature, a bounded 1-D optimizer and the
//! seeded random-stream contract shared by the rest of the crate.

mod kendall;
mod normal;
mod optimize;
mod quadrature;
mod rng;

pub use kendall::kendall_tau;
pub use normal::{bivariate_normal_cdf, dnorm, pnorm, qnorm, std_normal_cdf, std_normal_quantile};
pub use optimize::{find_root, maximize_scalar, maximize_scalar_from, Maximum};
pub use quadrature::{debye1, gauss_legendre, integrate};
pub use rng::{uniform01, RngStream};

//! Gaussian process regression with learned, weighted pseudo-data coresets,
//! alongside exact GP, collapsed (Titsias) and stochastic (SVGP)
//! inducing-point baselines.

pub mod autodiff;
pub mod cvtgp;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod params;
pub mod softplus;
pub mod train;

pub use error::{Error, Result};
pub use kernels::KernelParams;
pub use linalg::Matrix;

//! Stochastic inversion of heterogeneous elastic fields.
//!
//! The pipeline maps a standard Gaussian vector `eta` through per-component
//! Hermite chaos expansions to kernel-PCA feature coordinates `xi`, recovers
//! a nodal log-modulus field `y` by fixed-point pre-imaging, and solves plane
//! strain elasticity with `lambda = mu = exp(y)`. Gradients of the
//! displacement misfit flow back through an adjoint solve, the implicit
//! derivative of the pre-image and the chaos derivative, and drive a
//! Metropolis-adjusted Langevin sampler.

pub mod error;
pub mod kpca;
pub mod mcmc;
pub mod mesh_fem;
pub mod par;
pub mod pce;
pub mod posterior;
pub mod prior_gen;
mod textio;

pub use error::{Error, Result};

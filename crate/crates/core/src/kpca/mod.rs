//! Kernel principal component analysis with fixed-point pre-imaging.
//!
//! A linear kernel reduces everything here to classical PCA.

mod fit;
pub mod io;
mod kernel;
mod preimage;

pub use fit::{
    center_gram, feature_coordinates, feature_weights, fit, fit_matrix, gram_matrix, project,
    KpcaModel, Retain,
};
pub use kernel::{kernel_eval, Kernel, MAX_POLY_DEGREE};
pub use preimage::{
    preimage, preimage_jacobian, preimage_vjp, training_reconstruction_errors, Preimage,
    PreimageInit, PreimageOptions,
};

#[cfg(test)]
mod tests;

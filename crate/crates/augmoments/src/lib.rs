//! Exact moments, losses and spectra of images under randomized
//! geometric augmentations.
//!
//! An augmentation (translation, shear, rotation, zoom) acts on a
//! flattened image as a sparse linear operator `M(theta)`. Averaging that
//! operator over the parameter distribution gives the expected augmented
//! image in closed form; averaging outer products gives the second moment
//! and the augmentation variance. On top of these the crate provides the
//! exact expected MSE of a linear model under augmentation, its
//! closed-form minimizer, delta-method variance estimates with their
//! bounds, spectral analysis of the variance (tangent directions,
//! numerical rank), and a seeded Monte-Carlo harness that measures how
//! many sampled augmentations the exact quantities replace.
//!
//! All numerics are generic over the [`Scalar`] trait (`f32` or `f64`);
//! the `Real` alias and the aliases below fix the default `f64` build.

pub mod dataio;
pub mod distribution;
pub mod error;
pub mod grid;
pub mod losses;
pub mod mat;
pub mod moments;
pub mod montecarlo;
pub mod num;
pub mod special;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use num::Scalar;
pub use transform::TransformKind;

/// Default scalar type of the concrete aliases.
pub type Real = f64;

pub type Image = grid::Image<Real>;
pub type Mat = mat::Mat<Real>;
pub type Theta = transform::Theta<Real>;
pub type SparseOperator = transform::SparseOperator<Real>;
pub type ParamDistribution = distribution::ParamDistribution<Real>;
pub type QuadratureRule = distribution::QuadratureRule<Real>;
pub type ExpectedOperator = moments::ExpectedOperator<Real>;
pub type MomentSet = moments::MomentSet<Real>;
pub type SpectralFactor = spectral::SpectralFactor<Real>;
pub type LinearModel = losses::LinearModel<Real>;
pub type AugmentedDataset = losses::AugmentedDataset<Real>;
pub type LabeledDataset = dataio::LabeledDataset<Real>;
pub use grid::Grid;

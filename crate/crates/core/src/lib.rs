//! Probabilistic cluster kernels for incomplete data.
//!
//! The crate fits ensembles of Gaussian mixture models directly to data
//! with missing entries, turns their posteriors into a kernel matrix and
//! clusters with kernel PCA plus k-means. Imputation and RBF baselines,
//! missingness generators, Hungarian-matched accuracy and a reproducible
//! experiment harness are included.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gmm;
pub mod harness;
pub mod kernel;
pub mod seed;
pub mod spectral;

pub use dataset::IncompleteMatrix;
pub use error::{Error, Result};

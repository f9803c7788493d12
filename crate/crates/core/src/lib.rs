//! Covariance-informed subspace (CIS) dimension reduction for Bayesian
//! inverse problems.
//!
//! The informed subspace is spanned by the generalized eigenvectors of the
//! pencil formed by the posterior and prior covariances that carry the
//! smallest eigenvalues, i.e. the directions along which the data shrink the
//! prior variance the most. No likelihood gradient is required: the posterior
//! covariance is estimated by weighted Monte Carlo, refined iteratively
//! ([`pipelines::iterative_cis`]) or through adaptive tempering
//! ([`pipelines::cis_smc`]) when the prior-sample weights degenerate.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command-line runner live in the `cis` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod models;
pub mod pipelines;
pub mod problems;
pub mod reduction;
pub mod samplers;

pub(crate) mod stats;

pub use error::{CisError, Result};
pub use gaussian::{GaussianDist, ReducedCoordinates};
pub use linalg::{EigenOrder, PencilEigen, SpdMatrix, SubspaceBasis};
pub use models::{ForwardModel, GaussianLikelihood, LogLikelihood};
pub use reduction::{Projector, RankMode, RankRule, WeightedSampleSet};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;

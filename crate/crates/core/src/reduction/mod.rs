//! The covariance-informed subspace and everything needed to build it.
//!
//! The informed directions are the eigenvectors of the pencil
//! `(C_post, C_prior)` with the smallest eigenvalues: an eigenvalue `lambda`
//! means the posterior variance along that direction is `lambda` times the
//! prior variance. With `U` normalized so that `U^T C_prior U = I`, the
//! projector is `Pi_r = C_prior U_r U_r^T` and any `x` splits as
//! `x = V_r z_r + V_perp z_perp` with `V = C_prior U` and `z = U^T x`.

mod blg;
mod likelihood;
mod projector;
mod rank;
mod weights;

pub use blg::{
    approx_posterior_blg, blg_posterior, projected_model_posterior, spantini_cov_approx, spantini_projector, SpantiniProjector,
};
pub use likelihood::{approx_log_likelihood, LikelihoodApprox};
pub use projector::{cis_projector, cis_projector_with_rank, rayleigh_quotients, Projector};
pub use rank::{select_rank, RankMode, RankRule, RankSchedule};
pub use weights::{pooled_weights, weighted_cov, weighted_mean, wmc_fisher, wmc_weights, Batch, WeightedSampleSet, WmcEstimate};

/// Eigenvalues of a weighted covariance estimate are floored at this
/// fraction of the largest one before the pencil solve.
pub const COV_EIGEN_FLOOR: f64 = 1e-12;

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;

use super::projector::Projector;
use crate::error::{invalid, Result};
use crate::gaussian::{perp_prior_mean, standard_normal, GaussianDist};
use crate::models::LogLikelihood;
use crate::stats::log_mean_exp;

/// How the likelihood is integrated over the non-informed coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodApprox {
    /// One evaluation at the conditional prior mean of `z_perp`.
    PriorMean,
    /// Average of `L` over this many conditional prior draws of `z_perp`.
    MonteCarlo(usize),
}

/// `log L_r(z_r)`, the likelihood marginalized over `z_perp ~ N(U_perp^T mu, I)`.
pub fn approx_log_likelihood<L, R>(
    lik: &L,
    proj: &Projector,
    prior: &GaussianDist,
    z_r: &DVector<f64>,
    mode: LikelihoodApprox,
    rng: &mut R,
) -> Result<f64>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    if z_r.len() != proj.rank() {
        return Err(invalid!("z_r has length {}, projector rank is {}", z_r.len(), proj.rank()));
    }
    let mean_perp = perp_prior_mean(prior, proj);
    let informed = proj.v_r() * z_r;
    match mode {
        LikelihoodApprox::PriorMean => lik.log_likelihood(&(informed + proj.v_perp() * mean_perp)),
        LikelihoodApprox::MonteCarlo(0) => Err(invalid!("Monte Carlo approximation needs at least one draw")),
        LikelihoodApprox::MonteCarlo(n) => {
            let k = mean_perp.len();
            let xs: Vec<DVector<f64>> =
                (0..n).map(|_| &informed + proj.v_perp() * (&mean_perp + standard_normal(rng, k))).collect();
            Ok(log_mean_exp(&lik.log_likelihood_batch(&xs)?))
        }
    }
}

//! Covariance-informed versus gradient-informed subspaces from one prior
//! sample budget.
//!
//! Both use the same self-normalized likelihood weights of `N` prior draws:
//! the covariance route solves `(C_hat, C_prior)` with the weighted
//! covariance, the gradient route solves `(H_hat, C_prior^{-1})` with the
//! weighted Fisher matrix `sum w g g^T`. For linear problems the exact
//! subspaces of both routes are compared as well.

use cis_core::linalg::{angle_norm, floor_eigenvalues, forstner_distance, principal_angles};
use cis_core::reduction::{
    cis_projector, cis_projector_with_rank, pooled_weights, spantini_projector, weighted_cov, wmc_fisher, COV_EIGEN_FLOOR,
};
use cis_core::{Projector, SpdMatrix};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::{max_of, Context};
use crate::error::CliResult;
use crate::formats::Table;
use crate::problem::{Parallel, Problem};

/// Eigenvalues this close to 1 count as uninformed in the exact comparison.
const UNINFORMED_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub n_samples: usize,
    pub ess: f64,
    pub rank: usize,
    pub max_angle: f64,
    pub angle_norm: f64,
    pub cis_likelihood_evaluations: usize,
    pub gis_likelihood_evaluations: usize,
    pub gis_gradient_evaluations: usize,
    /// Forward solves spent on finite-difference Jacobians.
    pub gis_fd_forward_evaluations: usize,
    pub exact: Option<ExactComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactComparison {
    pub rank: usize,
    pub max_angle: f64,
}

pub fn compare(ctx: &Context) -> CliResult<CompareSummary> {
    let spec = &ctx.config.compare;
    let problem = Problem::build(&ctx.config.problem)?;
    let prior = problem.prior();
    let n = problem.dim();
    let mut rng = ctx.rng();
    let xs: Vec<DVector<f64>> = (0..spec.n_samples).map(|_| prior.sample_one(&mut rng)).collect();
    let ll = cis_core::models::log_likelihood_batch_or_zero(&Parallel(problem.likelihood()), &xs)?;
    let w = pooled_weights(std::slice::from_ref(&ll))?;
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();

    let c_hat = weighted_cov(&xs, &w)?;
    let (cis, cis_eig) = cis_projector(&c_hat, prior.cov(), &ctx.config.rank.rule())?;
    let r = cis.rank();

    let grads: Vec<DVector<f64>> =
        xs.par_iter().map(|x| problem.grad_log_likelihood(x, spec.fd_step)).collect::<Result<_, _>>()?;
    let g = DMatrix::from_fn(xs.len(), n, |i, j| grads[i][j]);
    let fisher = wmc_fisher(&w, &g)?;
    let prior_inv = SpdMatrix::new(prior.cov().inverse())?;
    let gis = spantini_projector(&fisher, &prior_inv, r)?;

    let angles = principal_angles(cis.v_r(), gis.projector.v_r())?;
    let mut table = Table::new(&["index", "angle"]);
    for (i, a) in angles.iter().enumerate() {
        table.push(vec![(i + 1) as f64, *a]);
    }
    table.write(&ctx.path("angles.csv"))?;

    let mut spectra = Table::new(&["index", "cis_eigenvalue", "gis_eigenvalue", "gis_equivalent"]);
    for i in 0..n {
        let d = gis.deltas[i];
        spectra.push(vec![(i + 1) as f64, cis_eig.eigenvalues[i], d, 1.0 / (1.0 + d)]);
    }
    spectra.write(&ctx.path("spectra.csv"))?;

    let exact = match problem.analytic_posterior() {
        Some(post) => {
            let post = post?;
            let Problem::Linear { problem: blg, .. } = &problem else { unreachable!("only linear problems are closed form") };
            let eig = blg.analytic_pencil()?;
            let r_exact = eig.eigenvalues.iter().filter(|l| **l < 1.0 - UNINFORMED_GAP).count().max(1);
            let (c, _) = cis_projector_with_rank(post.cov().matrix(), prior.cov(), r_exact)?;
            let h = spantini_projector(&blg.hessian(), &prior_inv, r_exact)?;
            let a = principal_angles(c.v_r(), h.projector.v_r())?;
            Some(ExactComparison { rank: r_exact, max_angle: max_of(&a) })
        }
        None => None,
    };

    if ctx.emit_plot_data {
        let mut t = Table::new(&["index", "weight"]);
        for (i, wi) in w.iter().enumerate() {
            t.push(vec![i as f64, *wi]);
        }
        t.write(&ctx.path("weights.csv"))?;
        let data = Budget { xs: &xs, ll: &ll, grads: &g, prior_inv: &prior_inv, rank: r };
        estimator_convergence(ctx, &problem, &data, (&cis, &gis.projector))?;
    }

    let fd_cost = if problem.uses_finite_differences() { 2 * n * xs.len() } else { 0 };
    let summary = CompareSummary {
        n_samples: xs.len(),
        ess,
        rank: r,
        max_angle: max_of(&angles),
        angle_norm: angle_norm(&angles),
        cis_likelihood_evaluations: xs.len(),
        gis_likelihood_evaluations: xs.len(),
        gis_gradient_evaluations: xs.len(),
        gis_fd_forward_evaluations: fd_cost,
        exact,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(ctx.path("compare.json"), json + "\n")
        .map_err(|e| crate::error::CliError::io(&ctx.path("compare.json"), e))?;
    Ok(summary)
}

/// Prior draws with their log-likelihoods and gradients.
struct Budget<'a> {
    xs: &'a [DVector<f64>],
    ll: &'a [f64],
    grads: &'a DMatrix<f64>,
    prior_inv: &'a SpdMatrix,
    rank: usize,
}

/// Estimates from the first `N` draws, for `N` = 10, 100, ... against a
/// reference: the Förstner distance of the weighted covariance and the
/// principal-angle norms of both rank-`r` subspaces. The references are exact
/// for linear problems and the full-budget estimates otherwise.
fn estimator_convergence(ctx: &Context, problem: &Problem, data: &Budget, full: (&Projector, &Projector)) -> CliResult<()> {
    let prior = problem.prior();
    let r = data.rank;
    let estimate = |k: usize| -> CliResult<(SpdMatrix, DMatrix<f64>)> {
        let w = pooled_weights(&[data.ll[..k].to_vec()])?;
        let cov = SpdMatrix::new(floor_eigenvalues(&weighted_cov(&data.xs[..k], &w)?, COV_EIGEN_FLOOR))?;
        let fisher = wmc_fisher(&w, &data.grads.rows(0, k).into_owned())?;
        Ok((cov, fisher))
    };
    let (reference, cis_ref, gis_ref, exact) = match problem.analytic_posterior() {
        Some(post) => {
            let post = post?;
            let Problem::Linear { problem: blg, .. } = problem else { unreachable!("only linear problems are closed form") };
            let (c, _) = cis_projector_with_rank(post.cov().matrix(), prior.cov(), r)?;
            let h = spantini_projector(&blg.hessian(), data.prior_inv, r)?.projector;
            (post.cov().clone(), c, h, 1.0)
        }
        None => (estimate(data.xs.len())?.0, full.0.clone(), full.1.clone(), 0.0),
    };
    let mut t = Table::new(&["n", "forstner", "cis_angle_norm", "gis_angle_norm", "exact_reference"]);
    let mut k = 10;
    while k <= data.xs.len() {
        let (cov, fisher) = estimate(k)?;
        let (c, _) = cis_projector_with_rank(cov.matrix(), prior.cov(), r)?;
        let h = spantini_projector(&fisher, data.prior_inv, r)?.projector;
        t.push(vec![
            k as f64,
            forstner_distance(&cov, &reference)?,
            angle_norm(&principal_angles(c.v_r(), cis_ref.v_r())?),
            angle_norm(&principal_angles(h.v_r(), gis_ref.v_r())?),
            exact,
        ]);
        k *= 10;
    }
    t.write(&ctx.path("estimator_convergence.csv"))
}

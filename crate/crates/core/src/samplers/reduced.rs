//! Chains on the informed coordinates.
//!
//! Both samplers use the prior-mean approximation of the marginal likelihood,
//! `log L(V_r z_r + V_perp m_perp)` with `m_perp = U_perp^T mu_prior`, as their
//! (first-stage) target.

use alloc::vec::Vec;

use libm::{exp, log};
use nalgebra::DVector;
use rand::Rng;

use super::kernels::{mh_chain_with, Chain, ProposalKernel};
use crate::error::{invalid, Result};
use crate::gaussian::{perp_prior_mean, reduced_prior, standard_normal, GaussianDist};
use crate::models::{log_likelihood_or_zero, LogLikelihood};
use crate::reduction::Projector;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub z_r: DVector<f64>,
    pub z_perp: DVector<f64>,
    /// `log L` at the prior-mean completion of `z_r`.
    pub log_lik_approx: f64,
    /// `log L` at `(z_r, z_perp)`, when it was evaluated.
    pub log_lik_full: Option<f64>,
}

/// Output of [`pseudo_marginal_mh`].
#[derive(Debug, Clone)]
pub struct ReducedChain {
    pub chain: Chain<f64>,
    /// `U_perp^T mu_prior`, the fixed non-informed coordinates.
    pub z_perp: DVector<f64>,
}

impl ReducedChain {
    pub fn states(&self) -> &[DVector<f64>] {
        &self.chain.states
    }

    /// `log L` at the prior-mean completion of each state.
    pub fn log_lik_approx(&self) -> &[f64] {
        &self.chain.aux
    }

    pub fn state(&self, k: usize) -> ChainState {
        ChainState {
            z_r: self.chain.states[k].clone(),
            z_perp: self.z_perp.clone(),
            log_lik_approx: self.chain.aux[k],
            log_lik_full: None,
        }
    }
}

fn check_setup(proj: &Projector, prior: &GaussianDist, kernel: &ProposalKernel) -> Result<()> {
    if proj.rank() == 0 {
        return Err(invalid!("chains on the informed subspace need rank >= 1"));
    }
    if kernel.dim() != proj.rank() {
        return Err(invalid!("kernel is {}-dimensional, projector rank is {}", kernel.dim(), proj.rank()));
    }
    if proj.dim() != prior.dim() {
        return Err(invalid!("projector is {}-dimensional, prior is {}-dimensional", proj.dim(), prior.dim()));
    }
    Ok(())
}

/// Metropolis-Hastings on `z_r` with `z_perp` pinned at its conditional prior
/// mean. Starts from `init`, or a draw of the reduced prior.
pub fn pseudo_marginal_mh<L, R>(
    lik: &L,
    proj: &Projector,
    prior: &GaussianDist,
    kernel: &mut ProposalKernel,
    init: Option<DVector<f64>>,
    n_steps: usize,
    rng: &mut R,
) -> Result<ReducedChain>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    check_setup(proj, prior, kernel)?;
    let prior_r = reduced_prior(prior, proj)?;
    let z_perp = perp_prior_mean(prior, proj);
    let fixed = proj.v_perp() * &z_perp;
    let init = match init {
        Some(z) => z,
        None => prior_r.sample_one(rng),
    };
    let target = |z: &DVector<f64>| -> Result<(f64, f64)> {
        let ll = lik.log_likelihood(&(proj.v_r() * z + &fixed))?;
        Ok((ll + prior_r.log_pdf(z)?, ll))
    };
    let chain = mh_chain_with(target, kernel, init, n_steps, rng)?;
    Ok(ReducedChain { chain, z_perp })
}

/// Output of [`delayed_acceptance`].
#[derive(Debug, Clone)]
pub struct DelayedChain {
    /// `states[0]` is the initial state.
    pub states: Vec<ChainState>,
    pub stage1_accepted: usize,
    pub stage2_accepted: usize,
    /// `log` of the second-stage ratio for every second-stage attempt.
    pub log_stage2_ratios: Vec<f64>,
    /// Likelihood evaluations, initial state included.
    pub evaluations: usize,
}

impl DelayedChain {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Full-space states `V_r z_r + V_perp z_perp`, one per row.
    pub fn full_states(&self, proj: &Projector) -> Vec<DVector<f64>> {
        self.states.iter().map(|s| proj.reconstruct(&s.z_r, &s.z_perp)).collect()
    }

    pub fn stage2_ratios(&self) -> Vec<f64> {
        self.log_stage2_ratios.iter().map(|l| exp(*l)).collect()
    }
}

/// Two-stage Metropolis-Hastings whose stationary law is the exact posterior.
///
/// Stage one screens a move of `z_r` with the prior-mean approximation.
/// Survivors get fresh `z_perp ~ N(U_perp^T mu, I)` and are accepted with
/// `min(1, L(x') L_r(z_r) / (L(x) L_r(z_r')))`. Starts from `init` (a
/// full-space point) or a prior draw.
pub fn delayed_acceptance<L, R>(
    lik: &L,
    proj: &Projector,
    prior: &GaussianDist,
    kernel: &mut ProposalKernel,
    init: Option<DVector<f64>>,
    n_steps: usize,
    rng: &mut R,
) -> Result<DelayedChain>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    check_setup(proj, prior, kernel)?;
    let prior_r = reduced_prior(prior, proj)?;
    let mean_perp = perp_prior_mean(prior, proj);
    let fixed = proj.v_perp() * &mean_perp;
    let approx = |z: &DVector<f64>| lik.log_likelihood(&(proj.v_r() * z + &fixed));

    let x0 = match init {
        Some(x) if x.len() != prior.dim() => {
            return Err(invalid!("initial state has length {}, prior is {}-dimensional", x.len(), prior.dim()))
        }
        Some(x) => x,
        None => prior.sample_one(rng),
    };
    let z0 = proj.reduce(&x0);
    let mut cur = ChainState {
        log_lik_approx: approx(&z0.z_r)?,
        log_lik_full: Some(lik.log_likelihood(&x0)?),
        z_r: z0.z_r,
        z_perp: z0.z_perp.expect("reduce fills z_perp"),
    };
    if !cur.log_lik_approx.is_finite() || !cur.log_lik_full.is_some_and(f64::is_finite) {
        return Err(invalid!("likelihood is not finite at the initial state"));
    }
    let mut cur_prior = prior_r.log_pdf(&cur.z_r)?;

    let mut out = DelayedChain {
        states: Vec::with_capacity(n_steps + 1),
        stage1_accepted: 0,
        stage2_accepted: 0,
        log_stage2_ratios: Vec::new(),
        evaluations: 2,
    };
    out.states.push(cur.clone());
    for _ in 0..n_steps {
        let (z_new, log_q) = kernel.propose(&cur.z_r, rng);
        let ll_approx = log_likelihood_or_zero(lik, &(proj.v_r() * &z_new + &fixed))?;
        let lp = prior_r.log_pdf(&z_new)?;
        out.evaluations += 1;
        let log_a1 = ll_approx + lp - cur.log_lik_approx - cur_prior + log_q;
        let log_a1 = if log_a1.is_nan() { f64::NEG_INFINITY } else { log_a1 };
        kernel.adapt(&cur.z_r, if log_a1 >= 0.0 { 1.0 } else { exp(log_a1) });
        if log(rng.random::<f64>()) < log_a1 {
            out.stage1_accepted += 1;
            let z_perp = &mean_perp + standard_normal(rng, mean_perp.len());
            let ll_full = log_likelihood_or_zero(lik, &proj.reconstruct(&z_new, &z_perp))?;
            out.evaluations += 1;
            let cur_full = cur.log_lik_full.expect("current state has a full likelihood");
            let log_a2 = ll_full + cur.log_lik_approx - cur_full - ll_approx;
            let log_a2 = if log_a2.is_nan() { f64::NEG_INFINITY } else { log_a2 };
            out.log_stage2_ratios.push(log_a2);
            if log(rng.random::<f64>()) < log_a2 {
                out.stage2_accepted += 1;
                cur = ChainState { z_r: z_new, z_perp, log_lik_approx: ll_approx, log_lik_full: Some(ll_full) };
                cur_prior = lp;
            }
        }
        out.states.push(cur.clone());
    }
    Ok(out)
}

//! Subspace construction drivers.
//!
//! [`iterative_cis`] alternates weighted covariance estimation, pencil
//! solves and short reduced chains, keeping every sample it ever drew in a
//! weighted archive. [`cis_smc`] replaces the prior-weighted start by an
//! adaptive tempering sequence for posteriors too concentrated for prior
//! importance weights.

use alloc::vec::Vec;

use libm::{exp, log};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::diagnostics::{bound_from_log_lik, BoundEstimate};
use crate::error::{invalid, CisError, Result};
use crate::gaussian::{perp_prior_mean, reduced_prior, standard_normal, GaussianDist};
use crate::linalg::{angle_norm, principal_angles, PencilEigen, SpdMatrix};
use crate::models::{log_likelihood_batch_or_zero, LogLikelihood};
use crate::reduction::{cis_projector, wmc_weights, Batch, Projector, RankRule, RankSchedule, WeightedSampleSet};
use crate::samplers::{
    pseudo_marginal_mh, resample, update_beta, update_beta_grouped, AdaptiveConfig, ProposalKernel, ResampleScheme,
};
use crate::stats::{ess, log_mean_exp};

/// Reduced-chain settings of one iteration of [`iterative_cis`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub n_steps: usize,
    /// At most this many chain states are kept, evenly spaced.
    pub max_kept: usize,
    /// Conditional-prior completions drawn for every kept state.
    pub n_perp: usize,
    pub adaptive: AdaptiveConfig,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_steps: 200, max_kept: 80, n_perp: 3, adaptive: AdaptiveConfig { start: 50, ..AdaptiveConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeConfig {
    pub n_init: usize,
    pub n_ite: usize,
    pub rank: RankRule,
    /// Evolving upper bound on the rank; `None` keeps `rank.r_max`.
    pub schedule: Option<RankSchedule>,
    pub chain: ChainConfig,
    /// Number of draws behind the reduced likelihood, used in the bound's
    /// Monte Carlo term. The prior-mean completion counts as one.
    pub bound_n_mc: usize,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            n_init: 100,
            n_ite: 60,
            rank: RankRule::plateau(1, 10),
            schedule: Some(RankSchedule::default()),
            chain: ChainConfig::default(),
            bound_n_mc: 1,
        }
    }
}

/// What happened during one iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Counts from 1.
    pub iteration: usize,
    pub projector: Projector,
    /// Ascending pencil eigenvalues.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Principal angles to the previous iteration's informed subspace.
    pub angles: Option<Vec<f64>>,
    /// Bound terms from this iteration's samples; needs `n_perp >= 2`.
    pub bound: Option<BoundEstimate>,
    /// ESS of the pooled weights used for the covariance estimate.
    pub ess: f64,
    /// Archived samples the covariance estimate was computed from.
    pub archive_size: usize,
    pub acceptance_rate: f64,
    /// Likelihood evaluations so far, prior samples included.
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct CisRunRecord {
    pub n_init: usize,
    /// ESS of the prior-sample weights.
    pub initial_ess: f64,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct CisRun {
    pub projector: Projector,
    pub eigen: PencilEigen,
    pub record: CisRunRecord,
    pub archive: WeightedSampleSet,
    pub evaluations: usize,
}

fn check_prior<L: LogLikelihood + ?Sized>(lik: &L, prior: &GaussianDist) -> Result<()> {
    if lik.dim() != prior.dim() {
        return Err(invalid!("likelihood is {}-dimensional, prior is {}-dimensional", lik.dim(), prior.dim()));
    }
    Ok(())
}

/// Proposal covariance for a chain on `z_r`: the estimated reduced posterior
/// covariance `U_r^T C U_r` scaled by `2.38^2 / r`.
fn reduced_proposal_cov(proj: &Projector, cov: &DMatrix<f64>) -> SpdMatrix {
    let r = proj.rank();
    let scale = 2.38 * 2.38 / r as f64;
    let c = proj.u_r().transpose() * cov * proj.u_r() * scale;
    let c = (&c + c.transpose()) * 0.5 + DMatrix::identity(r, r) * 1e-10;
    SpdMatrix::new(c).unwrap_or_else(|_| SpdMatrix::new(DMatrix::identity(r, r) * scale).expect("scaled identity is SPD"))
}

fn thinned_indices(n_steps: usize, max_kept: usize) -> Vec<usize> {
    if n_steps <= max_kept {
        (1..=n_steps).collect()
    } else {
        (0..max_kept).map(|k| ((k + 1) * n_steps) / max_kept).collect()
    }
}

/// Iterative CIS construction.
///
/// Starts from `n_init` prior samples, then for each iteration estimates the
/// posterior covariance from every archived sample, solves the pencil,
/// picks the rank, runs an adaptive chain on the informed coordinates
/// (started at the weighted mean), completes the kept states with
/// conditional-prior draws and archives them. Returns the last iteration's
/// projector. With `n_ite = 0` the projector comes from the prior samples
/// alone.
///
/// Fails with [`CisError::Degeneracy`] when the prior-sample weights have an
/// ESS below 2; [`cis_smc`] is meant for that case.
pub fn iterative_cis<L, R>(lik: &L, prior: &GaussianDist, config: &IterativeConfig, rng: &mut R) -> Result<CisRun>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    check_prior(lik, prior)?;
    if config.n_init < 2 {
        return Err(invalid!("n_init must be at least 2, got {}", config.n_init));
    }
    if config.chain.n_steps == 0 || config.chain.max_kept == 0 || config.chain.n_perp == 0 {
        return Err(invalid!("chain length, kept states and completions must all be positive"));
    }
    config.rank.validate(prior.dim())?;

    let n = prior.dim();
    let xs: Vec<DVector<f64>> = (0..config.n_init).map(|_| prior.sample_one(rng)).collect();
    let ll = log_likelihood_batch_or_zero(lik, &xs)?;
    let mut evaluations = config.n_init;
    let mut archive = WeightedSampleSet::new(n);
    archive.push(Batch::from_prior(xs, ll))?;
    let initial_ess = ess(&wmc_weights(&archive, 1.0)?);
    if !(initial_ess >= 2.0) {
        return Err(CisError::Degeneracy {
            ess: initial_ess,
            context: "prior-sample weights collapse at the first iteration; use the tempered construction (cis_smc)".into(),
        });
    }

    let mut record = CisRunRecord { n_init: config.n_init, initial_ess, iterations: Vec::new() };
    if config.n_ite == 0 {
        let est = archive.estimate(1.0)?;
        let (projector, eigen) = cis_projector(&est.cov, prior.cov(), &config.rank)?;
        return Ok(CisRun { projector, eigen, record, archive, evaluations });
    }

    let mut last: Option<(Projector, PencilEigen)> = None;
    for iteration in 1..=config.n_ite {
        let est = archive.estimate(1.0)?;
        let prev_rank = last.as_ref().map(|(p, _)| p.rank());
        let rule = match &config.schedule {
            Some(s) => s.rule(&config.rank, iteration, prev_rank),
            None => config.rank,
        };
        let (proj, eigen) = cis_projector(&est.cov, prior.cov(), &rule)?;
        let angles = match &last {
            Some((p, _)) => Some(principal_angles(p.v_r(), proj.v_r())?),
            None => None,
        };

        let mut kernel = ProposalKernel::adaptive(&reduced_proposal_cov(&proj, &est.cov), config.chain.adaptive)?;
        let init = proj.u_r().transpose() * &est.mean;
        let chain = pseudo_marginal_mh(lik, &proj, prior, &mut kernel, Some(init), config.chain.n_steps, rng)?;
        evaluations += chain.chain.evaluations;

        let kept = thinned_indices(config.chain.n_steps, config.chain.max_kept);
        let m_perp = perp_prior_mean(prior, &proj);
        let n_perp = config.chain.n_perp;
        let mut samples = Vec::with_capacity(kept.len() * n_perp);
        let mut approx = Vec::with_capacity(kept.len() * n_perp);
        for &k in &kept {
            let z = &chain.states()[k];
            for _ in 0..n_perp {
                let zp = &m_perp + standard_normal(rng, m_perp.len());
                samples.push(proj.reconstruct(z, &zp));
                approx.push(chain.log_lik_approx()[k]);
            }
        }
        let ll = log_likelihood_batch_or_zero(lik, &samples)?;
        evaluations += samples.len();

        let bound = if n_perp >= 2 {
            let mat = DMatrix::from_row_slice(kept.len(), n_perp, &ll);
            let row_approx: Vec<f64> = kept.iter().map(|k| chain.log_lik_approx()[*k]).collect();
            Some(bound_from_log_lik(&mat, Some(&row_approx), config.bound_n_mc)?)
        } else {
            None
        };

        record.iterations.push(IterationRecord {
            iteration,
            projector: proj.clone(),
            eigenvalues: eigen.eigenvalues.iter().copied().collect(),
            rank: proj.rank(),
            angles,
            bound,
            ess: est.ess,
            archive_size: archive.len(),
            acceptance_rate: chain.chain.acceptance_rate(),
            evaluations,
        });
        archive.push(Batch { samples, log_lik: ll, log_lik_approx: approx, beta: 1.0 })?;
        last = Some((proj, eigen));
    }
    let (projector, eigen) = last.expect("at least one iteration ran");
    Ok(CisRun { projector, eigen, record, archive, evaluations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcConfig {
    pub n_samp: usize,
    /// pCN moves per particle and stage.
    pub n_moves: usize,
    /// Conditional-prior completions per particle and stage.
    pub n_perp: usize,
    pub rank: RankRule,
    /// ESS target as a fraction of `n_samp`.
    pub ess_fraction: f64,
    /// Target used instead when the newest batch is dominated by one weight.
    pub degenerate_ess_fraction: f64,
    /// Largest normalized weight above which a batch counts as dominated.
    pub degenerate_max_weight: f64,
    /// Clipping constant for resampling, see [`crate::samplers::clip_weights`].
    pub clip: Option<f64>,
    pub scheme: ResampleScheme,
    pub max_stages: usize,
    /// Initial pCN step, adapted between moves.
    pub pcn_step: f64,
    pub target_accept: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_samp: 50,
            n_moves: 10,
            n_perp: 100,
            rank: RankRule::threshold(0.6, 1, 40),
            ess_fraction: 0.5,
            degenerate_ess_fraction: 0.25,
            degenerate_max_weight: 0.5,
            clip: Some(10.0),
            scheme: ResampleScheme::Systematic,
            max_stages: 100,
            pcn_step: 0.5,
            target_accept: 0.25,
        }
    }
}

/// One tempering stage of [`cis_smc`].
#[derive(Debug, Clone)]
pub struct SmcStage {
    /// Counts from 1.
    pub stage: usize,
    /// Tempering exponent the particles were moved under.
    pub beta: f64,
    /// Exponent chosen for the next stage.
    pub next_beta: f64,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    /// ESS of the pooled archive weights at `beta`.
    pub ess: f64,
    /// ESS of the new particles at `beta`, each weighted by the mean over its
    /// completions.
    pub particle_ess: f64,
    pub acceptance_rate: f64,
    pub pcn_step: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SmcRun {
    pub projector: Projector,
    pub eigen: PencilEigen,
    pub stages: Vec<SmcStage>,
    pub archive: WeightedSampleSet,
    /// Always 1 on success.
    pub beta: f64,
    pub evaluations: usize,
    /// Full-space samples of the last batch.
    pub final_samples: Vec<DVector<f64>>,
}

/// Floor of the tempering ESS target; below it every particle but one has
/// negligible weight.
const MIN_ESS_TARGET: f64 = 1.5;

/// The weighted estimate seen in the informed coordinates: mean `U_r^T mu`
/// and covariance `U_r^T C U_r = diag(lambda_1..lambda_r)`.
fn pooled_reference(proj: &Projector, mean: &DVector<f64>) -> Result<GaussianDist> {
    let r = proj.rank();
    let lambda = proj.eigenvalues().rows(0, r).into_owned();
    GaussianDist::new(proj.u_r().transpose() * mean, SpdMatrix::from_diagonal(&lambda)?)
}

/// CIS construction with adaptive tempering.
///
/// Stage 0 is `n_samp` prior draws. Each stage estimates the covariance of
/// the current tempered posterior from every batch drawn so far, solves the
/// pencil, resamples `n_samp` particles from the newest batch, moves them
/// with pCN steps on the informed coordinates under
/// `pi_r(z) L(z, m_perp)^beta`, completes each with `n_perp` conditional
/// prior draws and picks the next exponent from the new batch's ESS. Once
/// the exponent reaches 1, the projector is rebuilt from all batches at full
/// likelihood weight.
pub fn cis_smc<L, R>(lik: &L, prior: &GaussianDist, config: &SmcConfig, rng: &mut R) -> Result<SmcRun>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    check_prior(lik, prior)?;
    if config.n_samp < 2 {
        return Err(invalid!("n_samp must be at least 2, got {}", config.n_samp));
    }
    if config.n_perp == 0 {
        return Err(invalid!("n_perp must be positive"));
    }
    if !(config.ess_fraction > 0.0 && config.ess_fraction < 1.0)
        || !(config.degenerate_ess_fraction > 0.0 && config.degenerate_ess_fraction < 1.0)
    {
        return Err(invalid!("ESS fractions must lie in (0, 1)"));
    }
    config.rank.validate(prior.dim())?;

    let n = prior.dim();
    let xs: Vec<DVector<f64>> = (0..config.n_samp).map(|_| prior.sample_one(rng)).collect();
    let ll = log_likelihood_batch_or_zero(lik, &xs)?;
    let mut evaluations = config.n_samp;
    let tau = config.ess_fraction * config.n_samp as f64;
    let mut beta = update_beta(0.0, &ll, &alloc::vec![0.0; ll.len()], tau)?;
    let mut archive = WeightedSampleSet::new(n);
    archive.push(Batch { samples: xs, log_lik: ll, log_lik_approx: alloc::vec![0.0; config.n_samp], beta: 0.0 })?;

    let mut stages = Vec::new();
    let mut step = config.pcn_step;
    let mut stage = 0;
    while beta < 1.0 {
        stage += 1;
        if stage > config.max_stages {
            return Err(CisError::NonConvergence { stages: stage - 1, beta });
        }
        let est = archive.estimate(beta)?;
        let (proj, eigen) = cis_projector(&est.cov, prior.cov(), &config.rank)?;

        let newest = archive.batches().last().expect("archive is never empty");
        let lw = newest.log_weights(beta);
        let w = crate::samplers::weights_from_log(&lw)?;
        let idx = resample(&w, config.n_samp, config.scheme, config.clip, rng)?;
        let mut zs: Vec<DVector<f64>> = idx.iter().map(|i| proj.u_r().transpose() * &newest.samples[*i]).collect();

        let prior_r = reduced_prior(prior, &proj)?;
        let m_perp = perp_prior_mean(prior, &proj);
        let fixed = proj.v_perp() * &m_perp;
        let approx = |zs: &[DVector<f64>]| -> Result<Vec<f64>> {
            let xs: Vec<DVector<f64>> = zs.iter().map(|z| proj.v_r() * z + &fixed).collect();
            log_likelihood_batch_or_zero(lik, &xs)
        };
        let mut ll_bar = approx(&zs)?;
        evaluations += zs.len();
        let mut log_prior: Vec<f64> = zs.iter().map(|z| prior_r.log_pdf(z)).collect::<Result<_>>()?;

        let mut kernel = ProposalKernel::pcn(step, pooled_reference(&proj, &est.mean)?)?;
        let mut accepted_total = 0usize;
        for _ in 0..config.n_moves {
            let proposals: Vec<(DVector<f64>, f64)> = zs.iter().map(|z| kernel.propose(z, rng)).collect();
            let ys: Vec<DVector<f64>> = proposals.iter().map(|(y, _)| y.clone()).collect();
            let ll_new = approx(&ys)?;
            evaluations += ys.len();
            let mut accepted = 0usize;
            for (i, ((y, corr), l_new)) in proposals.into_iter().zip(ll_new).enumerate() {
                let lp = prior_r.log_pdf(&y)?;
                let log_a = beta * (l_new - ll_bar[i]) + lp - log_prior[i] + corr;
                if !log_a.is_nan() && log(rng.random::<f64>()) < log_a {
                    zs[i] = y;
                    ll_bar[i] = l_new;
                    log_prior[i] = lp;
                    accepted += 1;
                }
            }
            let rate = accepted as f64 / zs.len() as f64;
            accepted_total += accepted;
            step = (step * exp(rate - config.target_accept)).clamp(0.01, 1.0);
            kernel.set_pcn_step(step);
        }
        let acceptance_rate = if config.n_moves == 0 { 0.0 } else { accepted_total as f64 / (config.n_moves * zs.len()) as f64 };

        let mut samples = Vec::with_capacity(zs.len() * config.n_perp);
        let mut parent_ll = Vec::with_capacity(zs.len() * config.n_perp);
        for (z, l) in zs.iter().zip(&ll_bar) {
            for _ in 0..config.n_perp {
                samples.push(proj.reconstruct(z, &(&m_perp + standard_normal(rng, m_perp.len()))));
                parent_ll.push(*l);
            }
        }
        let ll = log_likelihood_batch_or_zero(lik, &samples)?;
        evaluations += samples.len();

        // a particle's weight averages over its completions
        let offsets: Vec<f64> = parent_ll.iter().map(|l| beta * l).collect();
        let own: Vec<f64> = ll
            .iter()
            .zip(&offsets)
            .map(|(l, o)| beta * l - o)
            .collect::<Vec<_>>()
            .chunks(config.n_perp)
            .map(log_mean_exp)
            .collect();
        let own_w = crate::samplers::weights_from_log(&own).unwrap_or_else(|_| alloc::vec![1.0; own.len()]);
        let particle_ess = ess(&own_w);
        let dominated = own_w.iter().copied().fold(0.0, f64::max) > config.degenerate_max_weight;
        let fraction = if dominated { config.degenerate_ess_fraction } else { config.ess_fraction };
        // relative to what the completions leave at the current exponent
        let tau = (fraction * particle_ess).max(MIN_ESS_TARGET);
        let next_beta = update_beta_grouped(beta, &ll, &offsets, config.n_perp, tau)?;

        stages.push(SmcStage {
            stage,
            beta,
            next_beta,
            rank: proj.rank(),
            eigenvalues: eigen.eigenvalues.iter().copied().collect(),
            ess: est.ess,
            particle_ess,
            acceptance_rate,
            pcn_step: step,
            evaluations,
        });
        archive.push(Batch { samples, log_lik: ll, log_lik_approx: parent_ll, beta })?;
        beta = next_beta;
    }

    let est = archive.estimate(1.0)?;
    let (projector, eigen) = cis_projector(&est.cov, prior.cov(), &config.rank)?;
    let final_samples = archive.batches().last().expect("archive is never empty").samples.clone();
    Ok(SmcRun { projector, eigen, stages, archive, beta: 1.0, evaluations, final_samples })
}

/// How reduced samples are completed in the non-informed coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    /// `z_perp` fixed at its conditional prior mean.
    PriorMean,
    /// This many independent conditional prior draws per reduced sample.
    Draws(usize),
}

/// Full-space samples `V_r z_r + V_perp z_perp`, one per row, for every
/// reduced sample and completion (reduced sample index varies slowest).
pub fn assemble_full_posterior<R: Rng + ?Sized>(
    proj: &Projector,
    prior: &GaussianDist,
    reduced: &[DVector<f64>],
    completion: Completion,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if proj.dim() != prior.dim() {
        return Err(invalid!("projector is {}-dimensional, prior is {}-dimensional", proj.dim(), prior.dim()));
    }
    let per = match completion {
        Completion::PriorMean => 1,
        Completion::Draws(0) => return Err(invalid!("need at least one completion per sample")),
        Completion::Draws(k) => k,
    };
    let m_perp = perp_prior_mean(prior, proj);
    let mut out = DMatrix::zeros(reduced.len() * per, proj.dim());
    for (i, z) in reduced.iter().enumerate() {
        if z.len() != proj.rank() {
            return Err(invalid!("reduced sample {i} has length {}, rank is {}", z.len(), proj.rank()));
        }
        for j in 0..per {
            let zp = match completion {
                Completion::PriorMean => m_perp.clone(),
                Completion::Draws(_) => &m_perp + standard_normal(rng, m_perp.len()),
            };
            out.set_row(i * per + j, &proj.reconstruct(z, &zp).transpose());
        }
    }
    Ok(out)
}

/// Advisory stopping thresholds for the iterative construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopThresholds {
    /// Upper limit on both `Var(sqrt w)` and `E[Var(w)]`.
    pub max_variance: f64,
    /// Lower limit on `E(sqrt w)`.
    pub min_expectation: f64,
}

impl Default for StopThresholds {
    fn default() -> Self {
        Self { max_variance: 0.25, min_expectation: 0.85 }
    }
}

impl StopThresholds {
    pub fn satisfied(&self, e_sqrt_w: f64, var_sqrt_w: f64, e_cond_var_w: f64) -> bool {
        var_sqrt_w < self.max_variance && e_cond_var_w < self.max_variance && e_sqrt_w > self.min_expectation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub iteration: usize,
    pub rank: usize,
    pub e_sqrt_w: Option<f64>,
    pub var_sqrt_w: Option<f64>,
    pub e_cond_var_w: Option<f64>,
    pub hellinger_sq_bound: Option<f64>,
    pub max_angle: Option<f64>,
    pub angle_norm: Option<f64>,
    pub evaluations: usize,
    pub stop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub thresholds: StopThresholds,
    /// First iteration whose stop flag is set.
    pub first_stop: Option<usize>,
}

/// Per-iteration bound terms and subspace angles with an advisory stop flag.
pub fn convergence_report(record: &CisRunRecord, thresholds: StopThresholds) -> Result<ConvergenceReport> {
    if record.iterations.len() < 2 {
        return Err(invalid!("a report needs at least 2 iterations, got {}", record.iterations.len()));
    }
    let rows: Vec<ReportRow> = record
        .iterations
        .iter()
        .map(|it| {
            let stop = it.bound.is_some_and(|b| thresholds.satisfied(b.e_sqrt_w, b.var_sqrt_w, b.e_cond_var_w));
            ReportRow {
                iteration: it.iteration,
                rank: it.rank,
                e_sqrt_w: it.bound.map(|b| b.e_sqrt_w),
                var_sqrt_w: it.bound.map(|b| b.var_sqrt_w),
                e_cond_var_w: it.bound.map(|b| b.e_cond_var_w),
                hellinger_sq_bound: it.bound.map(|b| b.hellinger_sq_bound),
                max_angle: it.angles.as_ref().map(|a| a.iter().copied().fold(0.0, f64::max)),
                angle_norm: it.angles.as_ref().map(|a| angle_norm(a)),
                evaluations: it.evaluations,
                stop,
            }
        })
        .collect();
    let first_stop = rows.iter().find(|r| r.stop).map(|r| r.iteration);
    Ok(ConvergenceReport { rows, thresholds, first_stop })
}

/// Largest principal angle between successive subspaces over the last
/// `window` iterations, `None` when fewer are available.
pub fn recent_max_angle(record: &CisRunRecord, window: usize) -> Option<f64> {
    let angles: Vec<f64> = record
        .iterations
        .iter()
        .rev()
        .take(window)
        .filter_map(|it| it.angles.as_ref().map(|a| a.iter().copied().fold(0.0, f64::max)))
        .collect();
    if angles.len() < window {
        None
    } else {
        Some(angles.into_iter().fold(0.0, f64::max))
    }
}

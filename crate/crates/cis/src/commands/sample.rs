use std::path::Path;

use cis_core::diagnostics::autocorrelation;
use cis_core::pipelines::{assemble_full_posterior, Completion};
use cis_core::samplers::{delayed_acceptance, pseudo_marginal_mh, AdaptiveConfig, ProposalKernel};
use cis_core::{Projector, SpdMatrix};
use nalgebra::{DMatrix, DVector};

use super::Context;
use crate::config::SampleMode;
use crate::error::{CliError, CliResult};
use crate::formats::{read_projector, Table};
use crate::problem::{Parallel, Problem};

const BATCHES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Summary {
    pub attempts: usize,
    pub stage1_accepted: usize,
    pub stage2_accepted: usize,
    /// Mean of `min(1, ratio)` over the attempts.
    pub mean_acceptance: f64,
    pub min_log_ratio: f64,
    pub max_log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub samples: usize,
    pub rank: usize,
    pub evaluations: usize,
    pub stage2: Option<Stage2Summary>,
    /// Largest `|sample mean - posterior mean| / standard error` over the
    /// coordinates, when the posterior is known in closed form.
    pub max_mean_z: Option<f64>,
    /// Largest relative error of the sample variances, same condition.
    pub max_var_rel_error: Option<f64>,
}

/// Samples the posterior with a projector written by `reduce`.
pub fn sample(ctx: &Context, projector: &Path) -> CliResult<SampleSummary> {
    let problem = Problem::build(&ctx.config.problem)?;
    let proj = read_projector(projector)?;
    if proj.dim() != problem.dim() {
        return Err(CliError::Input(format!(
            "projector is {}-dimensional, the configured problem is {}-dimensional",
            proj.dim(),
            problem.dim()
        )));
    }
    let spec = &ctx.config.sampler;
    let prior = problem.prior();
    let lik = Parallel(problem.likelihood());
    let mut rng = ctx.rng();
    let r = proj.rank();
    let kept = spec.n_steps - spec.burn_in;

    let (samples, evaluations, stage2) = match spec.mode {
        SampleMode::Delayed => {
            if r == 0 {
                return Err(CliError::Input("delayed acceptance needs a projector of rank >= 1".into()));
            }
            let mut kernel = reduced_kernel(&proj, spec.adapt_start)?;
            let chain = delayed_acceptance(&lik, &proj, prior, &mut kernel, Some(prior.mean().clone()), spec.n_steps, &mut rng)?;
            let full = chain.full_states(&proj);
            let m = rows(&full[spec.burn_in + 1..]);
            let ratios = &chain.log_stage2_ratios;
            let stage2 = Stage2Summary {
                attempts: ratios.len(),
                stage1_accepted: chain.stage1_accepted,
                stage2_accepted: chain.stage2_accepted,
                mean_acceptance: ratios.iter().map(|l| l.min(0.0).exp()).sum::<f64>() / ratios.len().max(1) as f64,
                min_log_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
                max_log_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            (m, chain.evaluations, Some(stage2))
        }
        SampleMode::Approximate if r == 0 => (prior.sample(&mut rng, kept), 0, None),
        SampleMode::Approximate => {
            let mut kernel = reduced_kernel(&proj, spec.adapt_start)?;
            let chain = pseudo_marginal_mh(&lik, &proj, prior, &mut kernel, None, spec.n_steps, &mut rng)?;
            let completion = if spec.completions == 0 { Completion::PriorMean } else { Completion::Draws(spec.completions) };
            let m = assemble_full_posterior(&proj, prior, &chain.states()[spec.burn_in + 1..], completion, &mut rng)?;
            (m, chain.chain.evaluations, None)
        }
    };

    let n = samples.ncols();
    let header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let mut table = Table { header, rows: Vec::with_capacity(samples.nrows()) };
    for row in samples.row_iter() {
        table.rows.push(row.iter().copied().collect());
    }
    table.write(&ctx.path("samples.csv"))?;

    let max_lag = spec.max_lag.min(samples.nrows().saturating_sub(1));
    let mut acf = Table::new(&["coordinate", "lag", "value"]);
    for (i, col) in samples.column_iter().enumerate() {
        let values: Vec<f64> = col.iter().copied().collect();
        for (lag, v) in autocorrelation(&values, max_lag)?.values.iter().enumerate() {
            acf.push(vec![i as f64, lag as f64, *v]);
        }
    }
    acf.write(&ctx.path("acf.csv"))?;

    if let Some(s) = &stage2 {
        let mut t =
            Table::new(&["attempts", "stage1_accepted", "stage2_accepted", "mean_acceptance", "min_log_ratio", "max_log_ratio"]);
        t.push(vec![
            s.attempts as f64,
            s.stage1_accepted as f64,
            s.stage2_accepted as f64,
            s.mean_acceptance,
            s.min_log_ratio,
            s.max_log_ratio,
        ]);
        t.write(&ctx.path("stage2.csv"))?;
    }

    let (mean, var) = moments(&samples);
    let (mut max_mean_z, mut max_var_rel_error) = (None, None);
    if let Some(post) = problem.analytic_posterior() {
        let post = post?;
        let mut t = Table::new(&["coordinate", "sample_mean", "posterior_mean", "std_error", "z", "sample_var", "posterior_var"]);
        let (mut zmax, mut vmax) = (0.0f64, 0.0f64);
        for i in 0..n {
            let col: Vec<f64> = samples.column(i).iter().copied().collect();
            let se = batch_std_error(&col);
            let pm = post.mean()[i];
            let pv = post.cov().matrix()[(i, i)];
            let z = (mean[i] - pm) / se;
            zmax = zmax.max(z.abs());
            vmax = vmax.max((var[i] - pv).abs() / pv);
            t.push(vec![i as f64, mean[i], pm, se, z, var[i], pv]);
        }
        t.write(&ctx.path("moments.csv"))?;
        max_mean_z = Some(zmax);
        max_var_rel_error = Some(vmax);
    }

    if ctx.emit_plot_data {
        let mut t = Table::new(&["coordinate", "sample_mean", "sample_sd", "prior_mean", "prior_sd"]);
        for i in 0..n {
            t.push(vec![i as f64, mean[i], var[i].sqrt(), prior.mean()[i], prior.cov().matrix()[(i, i)].sqrt()]);
        }
        t.write(&ctx.path("marginals.csv"))?;
    }

    Ok(SampleSummary { samples: samples.nrows(), rank: r, evaluations, stage2, max_mean_z, max_var_rel_error })
}

/// Adaptive random walk on `z_r` started from the reduced posterior
/// covariance the projector implies, `diag(lambda_r)`, scaled by `2.38^2 / r`.
fn reduced_kernel(proj: &Projector, adapt_start: usize) -> CliResult<ProposalKernel> {
    let r = proj.rank();
    let scale = 2.38 * 2.38 / r as f64;
    let d = DVector::from_iterator(r, proj.eigenvalues().iter().take(r).map(|l| l.max(1e-12) * scale));
    Ok(ProposalKernel::adaptive(&SpdMatrix::from_diagonal(&d)?, AdaptiveConfig { start: adapt_start, ..Default::default() })?)
}

fn rows(xs: &[DVector<f64>]) -> DMatrix<f64> {
    let n = xs.first().map_or(0, |x| x.len());
    DMatrix::from_fn(xs.len(), n, |i, j| xs[i][j])
}

fn moments(samples: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let k = samples.nrows() as f64;
    let mean: Vec<f64> = samples.column_iter().map(|c| c.sum() / k).collect();
    let var =
        samples.column_iter().zip(&mean).map(|(c, m)| c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0)).collect();
    (mean, var)
}

/// Standard error of the mean of a correlated series by batch means.
fn batch_std_error(xs: &[f64]) -> f64 {
    let size = (xs.len() / BATCHES).max(1);
    let means: Vec<f64> = xs.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let b = means.len() as f64;
    let m = means.iter().sum::<f64>() / b;
    (means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1.0) / b).sqrt()
}

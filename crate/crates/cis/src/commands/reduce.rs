use cis_core::diagnostics::{bound_estimate, modal_contribution};
use cis_core::pipelines::{cis_smc, iterative_cis};
use cis_core::reduction::WeightedSampleSet;
use cis_core::samplers::{resample, ResampleScheme};
use cis_core::{CisError, Projector};
use log::info;

use super::{to_vec, Context};
use crate::config::MethodSpec;
use crate::error::{CliError, CliResult};
use crate::formats::{write_jsonl, write_projector, RunLine, Table};
use crate::problem::{Parallel, Problem};

#[derive(Debug, Clone, PartialEq)]
pub struct ReduceSummary {
    pub method: &'static str,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    /// Likelihood evaluations of the whole construction.
    pub evaluations: usize,
    /// Stages (tempered) or iterations (iterative) run.
    pub steps: usize,
    pub beta: Option<f64>,
}

/// Reduced samples and completions per sample behind each point of the
/// bound-by-rank curve.
const BOUND_SAMPLES: usize = 50;
const BOUND_COMPLETIONS: usize = 20;

/// Builds the informed subspace with the configured method and writes
/// `projector.txt` and `run.jsonl`.
pub fn reduce(ctx: &Context) -> CliResult<ReduceSummary> {
    let problem = Problem::build(&ctx.config.problem)?;
    let lik = Parallel(problem.likelihood());
    let prior = problem.prior();
    let rule = ctx.config.rank.rule();
    let mut rng = ctx.rng();
    let mut lines = Vec::new();

    let (projector, archive, summary) = match &ctx.config.method {
        MethodSpec::Cis(spec) => {
            let run = iterative_cis(&lik, prior, &spec.core(rule), &mut rng).map_err(|e| {
                if matches!(e, CisError::Degeneracy { .. }) {
                    eprintln!("hint: the prior-sample weights are degenerate; rerun with [method] kind = \"cis-smc\"");
                }
                CliError::from(e)
            })?;
            lines.push(RunLine::Run {
                method: "cis".into(),
                problem: ctx.config.problem.kind().into(),
                seed: ctx.seed,
                dim: problem.dim(),
                initial_ess: Some(run.record.initial_ess),
            });
            for it in &run.record.iterations {
                info!("iteration {}: rank {}, {} evaluations", it.iteration, it.rank, it.evaluations);
                lines.push(RunLine::Iteration {
                    iteration: it.iteration,
                    rank: it.rank,
                    eigenvalues: it.eigenvalues.clone(),
                    angles: it.angles.clone(),
                    e_sqrt_w: it.bound.map(|b| b.e_sqrt_w),
                    var_sqrt_w: it.bound.map(|b| b.var_sqrt_w),
                    e_cond_var_w: it.bound.map(|b| b.e_cond_var_w),
                    hellinger_sq_bound: it.bound.map(|b| b.hellinger_sq_bound),
                    ess: it.ess,
                    archive_size: it.archive_size,
                    acceptance_rate: it.acceptance_rate,
                    evaluations: it.evaluations,
                });
            }
            let summary = ReduceSummary {
                method: "cis",
                rank: run.projector.rank(),
                eigenvalues: to_vec(&run.eigen.eigenvalues),
                evaluations: run.evaluations,
                steps: run.record.iterations.len(),
                beta: None,
            };
            (run.projector, run.archive, summary)
        }
        MethodSpec::CisSmc(spec) => {
            let run = cis_smc(&lik, prior, &spec.core(rule), &mut rng)?;
            lines.push(RunLine::Run {
                method: "cis-smc".into(),
                problem: ctx.config.problem.kind().into(),
                seed: ctx.seed,
                dim: problem.dim(),
                initial_ess: None,
            });
            for s in &run.stages {
                info!("stage {}: beta {:.4} -> {:.4}, rank {}", s.stage, s.beta, s.next_beta, s.rank);
                lines.push(RunLine::Stage {
                    stage: s.stage,
                    beta: s.beta,
                    next_beta: s.next_beta,
                    rank: s.rank,
                    eigenvalues: s.eigenvalues.clone(),
                    ess: s.ess,
                    particle_ess: s.particle_ess,
                    acceptance_rate: s.acceptance_rate,
                    pcn_step: s.pcn_step,
                    evaluations: s.evaluations,
                });
            }
            let summary = ReduceSummary {
                method: "cis-smc",
                rank: run.projector.rank(),
                eigenvalues: to_vec(&run.eigen.eigenvalues),
                evaluations: run.evaluations,
                steps: run.stages.len(),
                beta: Some(run.beta),
            };
            (run.projector, run.archive, summary)
        }
    };
    lines.push(RunLine::Summary {
        rank: summary.rank,
        evaluations: summary.evaluations,
        eigenvalues: summary.eigenvalues.clone(),
        beta: summary.beta,
    });
    write_projector(&ctx.path("projector.txt"), &projector)?;
    write_jsonl(&ctx.path("run.jsonl"), &lines)?;
    if ctx.emit_plot_data {
        plot_data(ctx, &problem, &projector, &archive, &lines)?;
    }
    Ok(summary)
}

/// Spectra per step, Hellinger bound terms against the rank, informed fields
/// (groundwater) and cumulative modal contributions (occultation), in long
/// format.
fn plot_data(
    ctx: &Context,
    problem: &Problem,
    proj: &Projector,
    archive: &WeightedSampleSet,
    lines: &[RunLine],
) -> CliResult<()> {
    let mut spectrum = Table::new(&["step", "index", "eigenvalue"]);
    for line in lines {
        let (step, eig) = match line {
            RunLine::Iteration { iteration, eigenvalues, .. } => (*iteration, eigenvalues),
            RunLine::Stage { stage, eigenvalues, .. } => (*stage, eigenvalues),
            RunLine::Summary { eigenvalues, .. } => (0, eigenvalues),
            RunLine::Run { .. } => continue,
        };
        for (i, l) in eig.iter().enumerate() {
            spectrum.push(vec![step as f64, (i + 1) as f64, *l]);
        }
    }
    spectrum.write(&ctx.path("spectrum.csv"))?;

    bound_by_rank(ctx, problem, proj, archive)?;

    if let Some((grid, fields)) = problem.fields(proj.v_r()) {
        let mut t = Table::new(&["mode", "s", "value", "eigenvalue"]);
        for k in 0..fields.ncols() {
            for (i, s) in grid.iter().enumerate() {
                t.push(vec![(k + 1) as f64, *s, fields[(i, k)], proj.eigenvalues()[k]]);
            }
        }
        t.write(&ctx.path("informed_fields.csv"))?;
    }
    if let Some(blocks) = problem.blocks() {
        let mc = modal_contribution(proj, &blocks)?;
        let mut t = Table::new(&["block", "mode", "cumulative", "share"]);
        for b in 0..mc.cumulative.nrows() {
            for k in 0..mc.cumulative.ncols() {
                t.push(vec![b as f64, (k + 1) as f64, mc.cumulative[(b, k)], mc.shares[(b, k)]]);
            }
        }
        t.write(&ctx.path("modal_contribution.csv"))?;
    }
    Ok(())
}

/// Bound terms for the leading `r` directions of the final basis, for `r` up
/// to twice the selected rank (at least 10). Reduced samples come from the
/// archive resampled at the posterior.
fn bound_by_rank(ctx: &Context, problem: &Problem, proj: &Projector, archive: &WeightedSampleSet) -> CliResult<()> {
    let mut rng = ctx.side_rng();
    let est = archive.estimate(1.0)?;
    let picks = resample(&est.weights, BOUND_SAMPLES, ResampleScheme::Systematic, None, &mut rng)?;
    let xs: Vec<_> = archive.samples().collect();
    let lik = Parallel(problem.likelihood());
    let mut t = Table::new(&["rank", "e_sqrt_w", "var_sqrt_w", "e_cond_var_w", "hellinger_sq_bound", "std_error"]);
    for r in 1..=proj.dim().min((2 * proj.rank()).max(10)) {
        let p = proj.with_rank(r)?;
        let zs: Vec<_> = picks.iter().map(|i| p.reduce(xs[*i]).z_r).collect();
        let b = bound_estimate(&lik, &p, problem.prior(), &zs, BOUND_COMPLETIONS, 1, &mut rng)?;
        t.push(vec![r as f64, b.e_sqrt_w, b.var_sqrt_w, b.e_cond_var_w, b.hellinger_sq_bound, b.std_error]);
    }
    t.write(&ctx.path("bound_by_rank.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, IterativeSpec, ProblemSpec, SmcSpec};
    use crate::formats::{read_jsonl, read_projector};

    fn context(config: ExperimentConfig, plot: bool) -> (Context, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        (Context::new(config, Some(5), Some(dir.path().to_path_buf()), plot), dir)
    }

    fn small_iterative() -> MethodSpec {
        MethodSpec::Cis(IterativeSpec { n_init: 200, n_ite: 3, chain_steps: 200, ..Default::default() })
    }

    #[test]
    fn linear_reduce_writes_bundle_and_records() {
        let c = ExperimentConfig { method: small_iterative(), ..Default::default() };
        let (ctx, _d) = context(c, true);
        let s = reduce(&ctx).unwrap();
        let p = read_projector(&ctx.path("projector.txt")).unwrap();
        assert_eq!(p.rank(), s.rank);
        let lines = read_jsonl(&ctx.path("run.jsonl")).unwrap();
        assert!(matches!(lines[0], RunLine::Run { .. }));
        assert_eq!(lines.iter().filter(|l| matches!(l, RunLine::Iteration { .. })).count(), 3);
        assert!(matches!(lines.last(), Some(RunLine::Summary { .. })));
        assert!(ctx.path("spectrum.csv").exists());
        assert!(!ctx.path("informed_fields.csv").exists());
        let bound = Table::read(&ctx.path("bound_by_rank.csv")).unwrap();
        assert_eq!(bound.column("rank").unwrap(), (1..=6).map(|r| r as f64).collect::<Vec<_>>());
        // the full basis leaves nothing to integrate out
        assert!(bound.rows.last().unwrap()[2] < 1e-12);
    }

    #[test]
    fn concentrated_problem_is_degenerate_for_the_iterative_method() {
        let mut c = ExperimentConfig {
            problem: ProblemSpec::Concentrated2d { variance_ratio: 1e-6, theta: 0.7, y: 1.0 },
            method: small_iterative(),
            ..Default::default()
        };
        c.rank.r_max = 1;
        let (ctx, _d) = context(c.clone(), false);
        assert_eq!(reduce(&ctx).unwrap_err().exit_code(), crate::error::EXIT_DEGENERACY);

        c.method = MethodSpec::CisSmc(SmcSpec { n_samp: 100, n_perp: 5, ..Default::default() });
        let (ctx, _d) = context(c, false);
        let s = reduce(&ctx).unwrap();
        assert_eq!(s.beta, Some(1.0));
        let lines = read_jsonl(&ctx.path("run.jsonl")).unwrap();
        assert!(lines.iter().any(|l| matches!(l, RunLine::Stage { .. })));
    }
}

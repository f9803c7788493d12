use std::path::Path;

use cis_core::linalg::angle_norm;

use super::{max_of, opt, Context};
use crate::error::{CliError, CliResult};
use crate::formats::{read_jsonl, RunLine, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseReport {
    pub iterations: usize,
    pub stages: usize,
    /// First iteration whose stop flag is set.
    pub first_stop: Option<usize>,
    /// Largest principal angle of the last iteration.
    pub last_max_angle: Option<f64>,
    pub final_beta: Option<f64>,
}

/// Reads a run record log and tabulates the convergence diagnostics:
/// `diagnostics.csv` for iterative runs, `stages.csv` for tempered ones.
pub fn diagnose(ctx: &Context, records: &Path) -> CliResult<DiagnoseReport> {
    let lines = read_jsonl(records)?;
    if !matches!(lines.first(), Some(RunLine::Run { .. })) {
        return Err(CliError::Input(format!("{}: does not start with a run record", records.display())));
    }
    let thresholds = ctx.config.diagnose.thresholds();
    let mut diag = Table::new(&[
        "iteration",
        "rank",
        "e_sqrt_w",
        "var_sqrt_w",
        "e_cond_var_w",
        "hellinger_sq_bound",
        "max_angle",
        "angle_norm",
        "ess",
        "evaluations",
        "stop",
    ]);
    let mut stages =
        Table::new(&["stage", "beta", "next_beta", "rank", "ess", "particle_ess", "acceptance_rate", "pcn_step", "evaluations"]);
    let mut angles_long = Table::new(&["iteration", "index", "angle"]);
    let mut report = DiagnoseReport { iterations: 0, stages: 0, first_stop: None, last_max_angle: None, final_beta: None };
    for line in &lines {
        match line {
            RunLine::Iteration {
                iteration,
                rank,
                angles,
                e_sqrt_w,
                var_sqrt_w,
                e_cond_var_w,
                hellinger_sq_bound,
                ess,
                evaluations,
                ..
            } => {
                let stop = match (e_sqrt_w, var_sqrt_w, e_cond_var_w) {
                    (Some(e), Some(v), Some(c)) => thresholds.satisfied(*e, *v, *c),
                    _ => false,
                };
                if stop && report.first_stop.is_none() {
                    report.first_stop = Some(*iteration);
                }
                for (k, a) in angles.iter().flatten().enumerate() {
                    angles_long.push(vec![*iteration as f64, (k + 1) as f64, *a]);
                }
                let max_angle = angles.as_deref().map(max_of);
                report.last_max_angle = max_angle;
                report.iterations += 1;
                diag.push(vec![
                    *iteration as f64,
                    *rank as f64,
                    opt(*e_sqrt_w),
                    opt(*var_sqrt_w),
                    opt(*e_cond_var_w),
                    opt(*hellinger_sq_bound),
                    opt(max_angle),
                    opt(angles.as_deref().map(angle_norm)),
                    *ess,
                    *evaluations as f64,
                    if stop { 1.0 } else { 0.0 },
                ]);
            }
            RunLine::Stage {
                stage, beta, next_beta, rank, ess, particle_ess, acceptance_rate, pcn_step, evaluations, ..
            } => {
                report.stages += 1;
                stages.push(vec![
                    *stage as f64,
                    *beta,
                    *next_beta,
                    *rank as f64,
                    *ess,
                    *particle_ess,
                    *acceptance_rate,
                    *pcn_step,
                    *evaluations as f64,
                ]);
            }
            RunLine::Summary { beta, .. } => report.final_beta = *beta,
            RunLine::Run { .. } => {}
        }
    }
    if report.iterations > 0 {
        diag.write(&ctx.path("diagnostics.csv"))?;
        if ctx.emit_plot_data {
            angles_long.write(&ctx.path("successive_angles.csv"))?;
        }
    }
    if report.stages > 0 {
        stages.write(&ctx.path("stages.csv"))?;
    }
    Ok(report)
}

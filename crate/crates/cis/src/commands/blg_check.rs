//! Closed-form checks of the projector on random linear-Gaussian problems:
//! prior orthogonality of the split, Förstner optimality of the approximate
//! posterior covariance, and a Kullback-Leibler comparison with the
//! low-rank update built from the Hessian.

use cis_core::diagnostics::gaussian_kld;
use cis_core::linalg::forstner_distance;
use cis_core::problems::random_blg;
use cis_core::reduction::{approx_posterior_blg, cis_projector_with_rank, projected_model_posterior, spantini_projector};
use cis_core::{Projector, SpdMatrix};
use nalgebra::DVector;
use rand::Rng;

use super::{random_prior_basis, Context};
use crate::config::CheckBasis;
use crate::error::CliResult;
use crate::formats::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct BlgCheckRow {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    /// `max|Pi C_prior (I - Pi^T)|`.
    pub orthogonality: f64,
    /// `d_F` between the approximate and exact posterior covariances.
    pub forstner: f64,
    /// Sum of `log^2` of the discarded eigenvalues.
    pub forstner_expected: f64,
    /// Random projectors whose `d_F` is smaller.
    pub alternatives_closer: usize,
    pub kld: f64,
    /// Divergence of the projected-model posterior on the Hessian-based subspace.
    pub kld_reference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlgCheckReport {
    pub rows: Vec<BlgCheckRow>,
}

impl BlgCheckReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }
}

pub fn blg_check(ctx: &Context) -> CliResult<BlgCheckReport> {
    let spec = &ctx.config.blg_check;
    let tol = spec.tolerance;
    let mut rng = ctx.rng();
    let mut rows = Vec::with_capacity(spec.instances);
    for _ in 0..spec.instances {
        let n = rng.random_range(2..=spec.n_max);
        let m = rng.random_range(1..=spec.m_max);
        let p = random_blg(n, m, &mut rng)?;
        let r = if spec.full_rank { n } else { spec.rank.unwrap_or_else(|| rng.random_range(1..=m.min(n))).min(n) };
        let post = p.posterior()?;
        let (minor, eig) = cis_projector_with_rank(post.cov().matrix(), p.prior.cov(), r)?;
        let proj = match spec.basis {
            CheckBasis::Minor => minor,
            CheckBasis::Leading => {
                let k = eig.eigenvectors.ncols();
                let u = eig.eigenvectors.select_columns((0..k).rev().collect::<Vec<_>>().iter());
                let lam = DVector::from_iterator(k, eig.eigenvalues.iter().rev().copied());
                Projector::from_basis(u, p.prior.cov(), r, lam)?
            }
        };
        let orthogonality = proj.c_orthogonality_residual(p.prior.cov().matrix());
        let approx = approx_posterior_blg(&proj, &post, &p.prior)?;
        let forstner = forstner_distance(approx.cov(), post.cov())?;
        let forstner_expected: f64 = eig.eigenvalues.iter().skip(r).map(|l| l.ln().powi(2)).sum();

        let mut alternatives_closer = 0;
        for _ in 0..spec.alternatives {
            let u = random_prior_basis(p.prior.cov(), &mut rng);
            let alt = Projector::from_basis(u, p.prior.cov(), r, DVector::from_element(n, f64::NAN))?;
            let d = forstner_distance(approx_posterior_blg(&alt, &post, &p.prior)?.cov(), post.cov())?;
            if d < forstner - tol {
                alternatives_closer += 1;
            }
        }

        let hessian_basis = spantini_projector(&p.hessian(), &SpdMatrix::new(p.prior.cov().inverse())?, r)?;
        let reference = projected_model_posterior(&p.forward, &p.noise, &p.prior, &p.data, &hessian_basis.projector)?;
        let kld = gaussian_kld(&post, &approx)?;
        let kld_reference = gaussian_kld(&post, &reference)?;

        let pass = orthogonality <= tol
            && (forstner - forstner_expected).abs() <= tol * (1.0 + forstner_expected)
            && alternatives_closer == 0
            && kld <= kld_reference + tol * kld_reference.max(1.0);
        rows.push(BlgCheckRow {
            n,
            m,
            rank: r,
            orthogonality,
            forstner,
            forstner_expected,
            alternatives_closer,
            kld,
            kld_reference,
            pass,
        });
    }

    let mut table = Table::new(&[
        "instance",
        "n",
        "m",
        "rank",
        "orthogonality",
        "forstner",
        "forstner_expected",
        "alternatives_closer",
        "kld",
        "kld_reference",
        "pass",
    ]);
    for (i, r) in rows.iter().enumerate() {
        table.push(vec![
            i as f64,
            r.n as f64,
            r.m as f64,
            r.rank as f64,
            r.orthogonality,
            r.forstner,
            r.forstner_expected,
            r.alternatives_closer as f64,
            r.kld,
            r.kld_reference,
            if r.pass { 1.0 } else { 0.0 },
        ]);
    }
    table.write(&ctx.path("blg_check.csv"))?;
    Ok(BlgCheckReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn ctx(edit: impl FnOnce(&mut ExperimentConfig)) -> (Context, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::default();
        c.blg_check.instances = 8;
        c.blg_check.n_max = 8;
        c.blg_check.m_max = 4;
        c.blg_check.alternatives = 5;
        edit(&mut c);
        (Context::new(c, Some(11), Some(dir.path().to_path_buf()), false), dir)
    }

    #[test]
    fn optimal_projector_passes() {
        let (c, _d) = ctx(|_| {});
        let rep = blg_check(&c).unwrap();
        assert_eq!(rep.failures(), 0, "{:?}", rep.rows);
        assert!(c.path("blg_check.csv").exists());
    }

    #[test]
    fn full_rank_reports_zero_distance() {
        let (c, _d) = ctx(|c| c.blg_check.full_rank = true);
        let rep = blg_check(&c).unwrap();
        assert!(rep.rows.iter().all(|r| r.rank == r.n && r.forstner < 1e-10 && r.forstner_expected == 0.0));
    }

    #[test]
    fn leading_eigenvectors_fail() {
        let (c, _d) = ctx(|c| c.blg_check.basis = CheckBasis::Leading);
        let rep = blg_check(&c).unwrap();
        assert!(rep.failures() > 0);
        assert!(rep.rows.iter().any(|r| r.kld > r.kld_reference * 1.01));
    }
}

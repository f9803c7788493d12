//! Realizes the configured problem. Each problem carries its own seed, so
//! `reduce` and `sample` see the same data whatever the run seed is.

use cis_core::models::{ForwardModel, LogLikelihood};
use cis_core::problems::{
    concentrated_blg_2d, gomos_desk, gomos_with_operators, groundwater, random_blg, BlgProblem, GomosProblem, GroundwaterProblem,
};
use cis_core::{GaussianDist, GaussianLikelihood, Result as CoreResult};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ProblemSpec;
use crate::error::CliResult;
use crate::formats::read_dims_csv;

pub enum Problem {
    Linear { problem: BlgProblem, likelihood: GaussianLikelihood<cis_core::models::LinearModel> },
    Groundwater(GroundwaterProblem),
    Gomos(GomosProblem),
}

impl Problem {
    pub fn build(spec: &ProblemSpec) -> CliResult<Self> {
        let linear = |problem: BlgProblem| -> CliResult<Self> {
            let likelihood = problem.likelihood()?;
            Ok(Problem::Linear { problem, likelihood })
        };
        match spec {
            ProblemSpec::Linear { seed, n, m } => linear(random_blg(*n, *m, &mut ChaCha8Rng::seed_from_u64(*seed))?),
            ProblemSpec::Concentrated2d { variance_ratio, theta, y } => linear(concentrated_blg_2d(*variance_ratio, *theta, *y)?),
            ProblemSpec::Groundwater(g) => {
                Ok(Problem::Groundwater(groundwater(&g.core(), &mut ChaCha8Rng::seed_from_u64(g.seed))?))
            }
            ProblemSpec::Gomos(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                let p = match (&g.path_lengths_csv, &g.cross_sections_csv) {
                    (Some(a), Some(l)) => gomos_with_operators(read_dims_csv(a)?, read_dims_csv(l)?, &g.core(), &mut rng)?,
                    _ => gomos_desk(&g.core(), &mut rng)?,
                };
                Ok(Problem::Gomos(p))
            }
        }
    }

    pub fn prior(&self) -> &GaussianDist {
        match self {
            Problem::Linear { problem, .. } => &problem.prior,
            Problem::Groundwater(p) => &p.prior,
            Problem::Gomos(p) => &p.prior,
        }
    }

    pub fn dim(&self) -> usize {
        self.prior().dim()
    }

    pub fn likelihood(&self) -> &(dyn LogLikelihood + Sync) {
        match self {
            Problem::Linear { likelihood, .. } => likelihood,
            Problem::Groundwater(p) => &p.likelihood,
            Problem::Gomos(p) => &p.likelihood,
        }
    }

    /// Gradient of the log-likelihood, by central differences with relative
    /// step `fd_step` except for linear models.
    pub fn grad_log_likelihood(&self, x: &DVector<f64>, fd_step: f64) -> CoreResult<DVector<f64>> {
        fn fd<M: ForwardModel>(lik: &GaussianLikelihood<M>, x: &DVector<f64>, h: f64) -> CoreResult<DVector<f64>> {
            let residual = lik.data() - lik.model().evaluate(x)?;
            let jac = cis_core::models::fd_jacobian(lik.model(), x, h)?;
            Ok(jac.transpose() * lik.noise().solve(&residual))
        }
        match self {
            Problem::Linear { likelihood, .. } => likelihood.grad_log_likelihood(x),
            Problem::Groundwater(p) => fd(&p.likelihood, x, fd_step),
            Problem::Gomos(p) => fd(&p.likelihood, x, fd_step),
        }
    }

    pub fn uses_finite_differences(&self) -> bool {
        !matches!(self, Problem::Linear { .. })
    }

    pub fn analytic_posterior(&self) -> Option<CoreResult<GaussianDist>> {
        match self {
            Problem::Linear { problem, .. } => Some(problem.posterior()),
            _ => None,
        }
    }

    /// Parameter index blocks, one per gas, for the modal contribution table.
    pub fn blocks(&self) -> Option<Vec<Vec<usize>>> {
        match self {
            Problem::Gomos(p) => Some(p.likelihood.model().gas_blocks()),
            _ => None,
        }
    }

    /// Node coordinates and the fields `V_r` maps to, groundwater only.
    pub fn fields(&self, v: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
        match self {
            Problem::Groundwater(p) => Some((p.model().solver().grid(), p.fields(v))),
            _ => None,
        }
    }
}

/// Evaluates batches on the rayon pool the command runs in. Results keep
/// input order, so runs are reproducible for any thread count.
pub struct Parallel<'a>(pub &'a (dyn LogLikelihood + Sync));

impl LogLikelihood for Parallel<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn log_likelihood(&self, x: &DVector<f64>) -> CoreResult<f64> {
        self.0.log_likelihood(x)
    }

    fn log_likelihood_batch(&self, xs: &[DVector<f64>]) -> CoreResult<Vec<f64>> {
        xs.par_iter().map(|x| self.0.log_likelihood(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GomosSpec, GroundwaterSpec};
    use crate::formats::write_dims_csv;

    #[test]
    fn problems_build_with_expected_dimensions() {
        assert_eq!(Problem::build(&ProblemSpec::Linear { seed: 1, n: 5, m: 2 }).unwrap().dim(), 5);
        let c = Problem::build(&ProblemSpec::Concentrated2d { variance_ratio: 1e-4, theta: 0.3, y: 1.0 }).unwrap();
        assert_eq!(c.dim(), 2);
        assert!(c.analytic_posterior().is_some());
        let g = Problem::build(&ProblemSpec::Groundwater(GroundwaterSpec { n_modes: 10, ..Default::default() })).unwrap();
        assert_eq!(g.dim(), 10);
        assert!(g.fields(&DMatrix::identity(10, 2)).is_some());
        let o = Problem::build(&ProblemSpec::Gomos(GomosSpec::default())).unwrap();
        assert_eq!(o.blocks().unwrap().len(), 4);
    }

    #[test]
    fn gomos_operators_load_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let desk = Problem::build(&ProblemSpec::Gomos(GomosSpec::default())).unwrap();
        let Problem::Gomos(p) = &desk else { unreachable!() };
        let a = dir.path().join("a.csv");
        let l = dir.path().join("l.csv");
        write_dims_csv(&a, p.likelihood.model().path_lengths()).unwrap();
        write_dims_csv(&l, p.likelihood.model().cross_sections()).unwrap();
        let spec = GomosSpec { path_lengths_csv: Some(a), cross_sections_csv: Some(l), ..Default::default() };
        let loaded = Problem::build(&ProblemSpec::Gomos(spec)).unwrap();
        let Problem::Gomos(q) = &loaded else { unreachable!() };
        assert_eq!(q.likelihood.data(), p.likelihood.data());
    }

    #[test]
    fn parallel_batches_keep_order() {
        let p = Problem::build(&ProblemSpec::Linear { seed: 2, n: 4, m: 3 }).unwrap();
        let xs: Vec<DVector<f64>> = (0..64).map(|i| DVector::from_element(4, i as f64 * 0.1)).collect();
        let serial: Vec<f64> = xs.iter().map(|x| p.likelihood().log_likelihood(x).unwrap()).collect();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let par = pool.install(|| Parallel(p.likelihood()).log_likelihood_batch(&xs).unwrap());
        assert_eq!(serial, par);
    }

    #[test]
    fn finite_difference_gradient_matches_linear_gradient() {
        let p = Problem::build(&ProblemSpec::Linear { seed: 3, n: 3, m: 2 }).unwrap();
        let Problem::Linear { likelihood, .. } = &p else { unreachable!() };
        let x = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let exact = p.grad_log_likelihood(&x, 1e-5).unwrap();
        let residual = likelihood.data() - likelihood.model().evaluate(&x).unwrap();
        let jac = cis_core::models::fd_jacobian(likelihood.model(), &x, 1e-5).unwrap();
        let fd = jac.transpose() * likelihood.noise().solve(&residual);
        assert!((exact - fd).amax() < 1e-6);
    }
}

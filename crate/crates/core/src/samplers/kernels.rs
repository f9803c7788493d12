use alloc::vec::Vec;

use libm::{exp, log, sqrt};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, CisError, Result};
use crate::gaussian::{standard_normal, GaussianDist};
use crate::linalg::SpdMatrix;

/// Settings of the adaptive random-walk kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    /// Steps run with the initial covariance before the empirical one is used.
    pub start: usize,
    /// Acceptance rate the global scale is steered towards.
    pub target_accept: f64,
    /// Added to the diagonal of the empirical covariance.
    pub jitter: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self { start: 100, target_accept: 0.234, jitter: 1e-8 }
    }
}

/// State of the adaptive random walk: running moments of the chain and a
/// log global scale tuned by a Robbins-Monro recursion with step `~ 1/k`.
#[derive(Debug, Clone)]
pub struct AdaptiveRwm {
    config: AdaptiveConfig,
    initial_chol: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_scale: f64,
    count: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub enum ProposalKernel {
    /// `x' = x + L xi` with `L L^T` the proposal covariance.
    RandomWalk {
        chol: DMatrix<f64>,
    },
    /// `x' = m + sqrt(1 - s^2) (x - m) + s L xi`, reversible with respect to
    /// the reference `N(m, L L^T)`.
    Pcn {
        step: f64,
        reference: GaussianDist,
    },
    Adaptive(AdaptiveRwm),
}

impl ProposalKernel {
    /// Isotropic or full-covariance random walk with covariance `scale^2 * cov`.
    pub fn random_walk(dim: usize, scale: f64, cov: Option<&SpdMatrix>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid!("random-walk scale must be positive, got {scale}"));
        }
        let chol = match cov {
            Some(c) if c.dim() != dim => return Err(invalid!("proposal covariance is {}-dimensional, chain is {dim}", c.dim())),
            Some(c) => c.chol_l() * scale,
            None => DMatrix::identity(dim, dim) * scale,
        };
        Ok(Self::RandomWalk { chol })
    }

    pub fn pcn(step: f64, reference: GaussianDist) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(invalid!("pCN step must lie in (0, 1], got {step}"));
        }
        Ok(Self::Pcn { step, reference })
    }

    /// Starts from covariance `initial` (used as is, no extra scaling).
    pub fn adaptive(initial: &SpdMatrix, config: AdaptiveConfig) -> Result<Self> {
        if !(config.target_accept > 0.0 && config.target_accept < 1.0) {
            return Err(invalid!("target acceptance must lie in (0, 1), got {}", config.target_accept));
        }
        let n = initial.dim();
        Ok(Self::Adaptive(AdaptiveRwm {
            config,
            initial_chol: initial.chol_l().clone(),
            chol: initial.chol_l().clone(),
            log_scale: 0.0,
            count: 0,
            mean: DVector::zeros(n),
            scatter: DMatrix::zeros(n, n),
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::RandomWalk { chol } => chol.nrows(),
            Self::Pcn { reference, .. } => reference.dim(),
            Self::Adaptive(a) => a.chol.nrows(),
        }
    }

    /// A proposal and its log Hastings correction `log q(x | x') - log q(x' | x)`.
    pub fn propose<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> (DVector<f64>, f64) {
        let xi = standard_normal(rng, x.len());
        match self {
            Self::RandomWalk { chol } => (x + chol * xi, 0.0),
            Self::Adaptive(a) => (x + &a.chol * xi * exp(a.log_scale), 0.0),
            Self::Pcn { step, reference } => {
                let m = reference.mean();
                let y = m + (x - m) * sqrt(1.0 - step * step) + reference.cov().color(&xi) * *step;
                let corr = reference.log_pdf(x).unwrap_or(0.0) - reference.log_pdf(&y).unwrap_or(0.0);
                (y, corr)
            }
        }
    }

    /// Feeds back the state after a step and that step's acceptance
    /// probability. Only the adaptive kernel uses it.
    pub fn adapt(&mut self, state: &DVector<f64>, accept_prob: f64) {
        if let Self::Adaptive(a) = self {
            a.update(state, accept_prob);
        }
    }

    /// Changes the pCN step; no effect on other kernels.
    pub fn set_pcn_step(&mut self, new_step: f64) {
        if let Self::Pcn { step, .. } = self {
            *step = new_step.clamp(1e-4, 1.0);
        }
    }
}

impl AdaptiveRwm {
    fn update(&mut self, x: &DVector<f64>, accept_prob: f64) {
        self.count += 1;
        let k = self.count as f64;
        let delta = x - &self.mean;
        self.mean += &delta / k;
        let delta2 = x - &self.mean;
        self.scatter.ger(1.0, &delta, &delta2, 1.0);

        let gain = 1.0 / (1.0 + k / 10.0);
        self.log_scale = (self.log_scale + gain * (accept_prob - self.config.target_accept)).clamp(-10.0, 10.0);

        if self.count < self.config.start.max(2) {
            return;
        }
        let n = self.mean.len();
        let cov = &self.scatter / (k - 1.0) * (2.38 * 2.38 / n as f64) + DMatrix::identity(n, n) * self.config.jitter;
        let cov = (&cov + cov.transpose()) * 0.5;
        if let Some(c) = cov.cholesky() {
            self.chol = c.l();
        } else {
            self.chol = self.initial_chol.clone();
        }
    }
}

/// A Metropolis-Hastings run. `states[0]` is the initial state.
#[derive(Debug, Clone)]
pub struct Chain<T = ()> {
    pub states: Vec<DVector<f64>>,
    pub log_target: Vec<f64>,
    /// Per-state auxiliary value returned by the target.
    pub aux: Vec<T>,
    pub accepted: usize,
    /// Number of target evaluations, the initial state included.
    pub evaluations: usize,
}

impl<T> Chain<T> {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.n_steps() == 0 {
            0.0
        } else {
            self.accepted as f64 / self.n_steps() as f64
        }
    }
}

/// Metropolis-Hastings on `target` (log density up to a constant).
pub fn mh_chain<F, R>(
    mut target: F,
    kernel: &mut ProposalKernel,
    init: DVector<f64>,
    n_steps: usize,
    rng: &mut R,
) -> Result<Chain>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
    R: Rng + ?Sized,
{
    mh_chain_with(|x| Ok((target(x)?, ())), kernel, init, n_steps, rng)
}

/// Like [`mh_chain`] for targets that also return a value to keep with each
/// state (e.g. the log-likelihood part of the density).
pub(crate) fn mh_chain_with<F, R, T>(
    mut target: F,
    kernel: &mut ProposalKernel,
    init: DVector<f64>,
    n_steps: usize,
    rng: &mut R,
) -> Result<Chain<T>>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, T)>,
    R: Rng + ?Sized,
    T: Clone,
{
    if init.len() != kernel.dim() {
        return Err(invalid!("initial state has length {}, kernel is {}-dimensional", init.len(), kernel.dim()));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("initial state is not finite"));
    }
    let (mut current_lt, mut current_aux) = target(&init)?;
    if !current_lt.is_finite() {
        return Err(invalid!("target density is not finite at the initial state ({current_lt})"));
    }
    let mut chain = Chain {
        states: Vec::with_capacity(n_steps + 1),
        log_target: Vec::with_capacity(n_steps + 1),
        aux: Vec::with_capacity(n_steps + 1),
        accepted: 0,
        evaluations: 1,
    };
    let mut current = init;
    chain.states.push(current.clone());
    chain.log_target.push(current_lt);
    chain.aux.push(current_aux.clone());
    for _ in 0..n_steps {
        let (proposal, log_q) = kernel.propose(&current, rng);
        // a failed model evaluation is a zero-density proposal
        let evaluated = match target(&proposal) {
            Ok(v) => Some(v),
            Err(CisError::Model(_)) => None,
            Err(e) => return Err(e),
        };
        chain.evaluations += 1;
        let log_alpha = match &evaluated {
            Some((lt, _)) if !lt.is_nan() => lt - current_lt + log_q,
            _ => f64::NEG_INFINITY,
        };
        let alpha = if log_alpha >= 0.0 { 1.0 } else { exp(log_alpha) };
        if log(rng.random::<f64>()) < log_alpha {
            let (lt, aux) = evaluated.expect("accepted proposals were evaluated");
            current = proposal;
            current_lt = lt;
            current_aux = aux;
            chain.accepted += 1;
        }
        kernel.adapt(&current, alpha);
        chain.states.push(current.clone());
        chain.log_target.push(current_lt);
        chain.aux.push(current_aux.clone());
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn column(chain: &Chain, i: usize) -> Vec<f64> {
        chain.states.iter().map(|s| s[i]).collect()
    }

    #[test]
    fn standard_tuning_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut k = ProposalKernel::random_walk(1, 2.4, None).unwrap();
        let c = mh_chain(|x| Ok(-0.5 * x[0] * x[0]), &mut k, DVector::zeros(1), 10_000, &mut rng).unwrap();
        let a = c.acceptance_rate();
        assert!((0.2..=0.6).contains(&a), "acceptance {a}");
    }

    #[test]
    fn flat_target_always_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut k = ProposalKernel::random_walk(2, 1.0, None).unwrap();
        let c = mh_chain(|_| Ok(0.0), &mut k, DVector::zeros(2), 500, &mut rng).unwrap();
        assert_eq!(c.accepted, 500);
        assert_eq!(c.evaluations, 501);
    }

    #[test]
    fn non_finite_start_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut k = ProposalKernel::random_walk(1, 1.0, None).unwrap();
        assert!(mh_chain(|_| Ok(f64::NEG_INFINITY), &mut k, DVector::zeros(1), 5, &mut rng).is_err());
        assert!(mh_chain(|_| Ok(0.0), &mut k, DVector::from_element(1, f64::NAN), 5, &mut rng).is_err());
        assert!(ProposalKernel::random_walk(1, 0.0, None).is_err());
        assert!(ProposalKernel::pcn(1.5, GaussianDist::standard(1)).is_err());
    }

    /// Batch-means standard error of the mean.
    fn batch_se(xs: &[f64], batches: usize) -> f64 {
        let size = xs.len() / batches;
        let means: Vec<f64> = xs.chunks(size).take(batches).map(crate::stats::mean).collect();
        sqrt(crate::stats::sample_variance(&means) / batches as f64)
    }

    #[test]
    fn gaussian_moments_within_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut k = ProposalKernel::random_walk(1, 2.4 * 2.0, None).unwrap();
        let c = mh_chain(|x| Ok(-(x[0] - 3.0) * (x[0] - 3.0) / 8.0), &mut k, DVector::from_element(1, 3.0), 100_000, &mut rng)
            .unwrap();
        let xs = column(&c, 0);
        let m = crate::stats::mean(&xs);
        assert!((m - 3.0).abs() < 3.0 * batch_se(&xs, 50), "mean {m}");
        let sq: Vec<f64> = xs.iter().map(|x| (x - 3.0) * (x - 3.0)).collect();
        let v = crate::stats::mean(&sq);
        assert!((v - 4.0).abs() < 3.0 * batch_se(&sq, 50), "variance {v}");
    }

    #[test]
    fn pcn_leaves_reference_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reference =
            GaussianDist::new(DVector::from_element(1, -1.0), SpdMatrix::from_diagonal(&DVector::from_element(1, 2.0)).unwrap())
                .unwrap();
        let r2 = reference.clone();
        let mut k = ProposalKernel::pcn(0.5, reference).unwrap();
        let c = mh_chain(move |x| r2.log_pdf(x), &mut k, DVector::from_element(1, -1.0), 100_000, &mut rng).unwrap();
        assert_eq!(c.accepted, 100_000);
        let xs = column(&c, 0);
        let m = crate::stats::mean(&xs);
        assert!((m + 1.0).abs() < 3.0 * batch_se(&xs, 50));
        let sq: Vec<f64> = xs.iter().map(|x| (x + 1.0) * (x + 1.0)).collect();
        assert!((crate::stats::mean(&sq) - 2.0).abs() < 3.0 * batch_se(&sq, 50));
    }

    /// Discretize a 1D target on bins, run the kernel, count transitions
    /// between bins in both directions. Reversibility makes the flow matrix
    /// symmetric.
    fn flow_asymmetry(kernel: &mut ProposalKernel, target: impl Fn(f64) -> f64, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = mh_chain(|x| Ok(target(x[0])), kernel, DVector::zeros(1), 200_000, &mut rng).unwrap();
        let bin = |x: f64| ((x + 3.0) / 0.5).floor().clamp(0.0, 11.0) as usize;
        let mut flow = [[0usize; 12]; 12];
        for w in c.states.windows(2) {
            flow[bin(w[0][0])][bin(w[1][0])] += 1;
        }
        [(4, 6), (5, 6), (5, 7), (6, 8)]
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (flow[i][j] as f64, flow[j][i] as f64);
                ((a - b).abs(), sqrt(a + b).max(1.0))
            })
            .collect()
    }

    #[test]
    fn kernels_satisfy_detailed_balance() {
        let target = |x: f64| -0.5 * x * x - 0.3 * x * x * x * x / 4.0;
        let mut rwm = ProposalKernel::random_walk(1, 1.5, None).unwrap();
        for (d, se) in flow_asymmetry(&mut rwm, target, 6) {
            assert!(d <= 3.0 * se, "rwm flow asymmetry {d} vs se {se}");
        }
        let mut pcn = ProposalKernel::pcn(0.7, GaussianDist::standard(1)).unwrap();
        for (d, se) in flow_asymmetry(&mut pcn, target, 7) {
            assert!(d <= 3.0 * se, "pcn flow asymmetry {d} vs se {se}");
        }
    }

    #[test]
    fn adaptive_kernel_learns_the_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut k = ProposalKernel::adaptive(&SpdMatrix::identity(2), AdaptiveConfig::default()).unwrap();
        // variances 100 and 0.01
        let c = mh_chain(|x| Ok(-0.5 * (x[0] * x[0] / 100.0 + x[1] * x[1] / 0.01)), &mut k, DVector::zeros(2), 20_000, &mut rng)
            .unwrap();
        let tail: Vec<f64> = c.states[10_000..].iter().map(|s| s[0]).collect();
        let v = crate::stats::sample_variance(&tail);
        assert!((50.0..200.0).contains(&v), "variance {v}");
        let a = c.acceptance_rate();
        assert!((0.1..0.5).contains(&a), "acceptance {a}");
    }
}

//! Approximation-quality measures.
//!
//! The weights `w = L / L_r` of the exact likelihood against its reduced
//! approximation have unit mean under the approximate posterior, and the
//! squared Hellinger distance between the two posteriors is
//! `1 - sqrt(1 - Var(sqrt(w)))`. Adding the Monte Carlo error of the reduced
//! likelihood gives the bound reported by [`bound_estimate`].

use alloc::vec::Vec;

use libm::{log, sqrt};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, CisError, Result};
use crate::gaussian::{perp_prior_mean, standard_normal, GaussianDist};
use crate::models::LogLikelihood;
use crate::reduction::Projector;
use crate::stats::{log_mean_exp, mean};

/// Tolerance on `|mean(w) - 1|` beyond which a weight-based estimate is
/// flagged as unreliable.
pub const MEAN_WEIGHT_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HellingerEstimate {
    pub hellinger_sq: f64,
    pub mean_w: f64,
    pub var_sqrt_w: f64,
    /// The raw variance fell outside `[0, 1]` and was clipped.
    pub clipped: bool,
    /// `mean(w)` is more than [`MEAN_WEIGHT_TOLERANCE`] away from 1.
    pub unreliable: bool,
}

/// Squared Hellinger distance from equally weighted draws of `w` under the
/// approximate posterior.
pub fn hellinger_sq_from_weights(weights: &[f64]) -> Result<HellingerEstimate> {
    let p = alloc::vec![1.0 / weights.len().max(1) as f64; weights.len()];
    hellinger_sq_weighted(weights, &p)
}

/// Same as [`hellinger_sq_from_weights`] with an explicit probability for
/// each weight, e.g. the masses of a discrete approximate posterior.
pub fn hellinger_sq_weighted(weights: &[f64], probs: &[f64]) -> Result<HellingerEstimate> {
    if weights.is_empty() || weights.len() != probs.len() {
        return Err(invalid!("{} weights for {} probabilities", weights.len(), probs.len()));
    }
    if weights.iter().chain(probs).any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid!("weights and probabilities must be finite and nonnegative"));
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(invalid!("probabilities sum to zero"));
    }
    let mean_w: f64 = weights.iter().zip(probs).map(|(w, p)| w * p).sum::<f64>() / total;
    let mean_sqrt: f64 = weights.iter().zip(probs).map(|(w, p)| sqrt(*w) * p).sum::<f64>() / total;
    let raw = mean_w - mean_sqrt * mean_sqrt;
    let var_sqrt_w = raw.clamp(0.0, 1.0);
    Ok(HellingerEstimate {
        hellinger_sq: 1.0 - sqrt(1.0 - var_sqrt_w),
        mean_w,
        var_sqrt_w,
        clipped: raw != var_sqrt_w,
        unreliable: (mean_w - 1.0).abs() > MEAN_WEIGHT_TOLERANCE,
    })
}

/// Monte Carlo estimate of the Hellinger bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEstimate {
    pub e_sqrt_w: f64,
    pub var_sqrt_w: f64,
    pub e_cond_var_w: f64,
    pub n_mc: usize,
    pub hellinger_sq_bound: f64,
    /// Standard error of `e_sqrt_w`, from the spread of its per-sample means.
    pub std_error: f64,
    pub clipped: bool,
}

impl BoundEstimate {
    fn from_terms(e_sqrt_w: f64, mean_w: f64, e_cond_var_w: f64, n_mc: usize, std_error: f64) -> Self {
        let raw = mean_w - e_sqrt_w * e_sqrt_w;
        let var_sqrt_w = raw.clamp(0.0, 1.0);
        Self {
            e_sqrt_w,
            var_sqrt_w,
            e_cond_var_w,
            n_mc,
            hellinger_sq_bound: 1.0 - sqrt(1.0 - var_sqrt_w) + 2.0 / n_mc as f64 * e_cond_var_w,
            std_error,
            clipped: raw != var_sqrt_w,
        }
    }
}

/// Bound terms from a matrix of log-likelihoods, one row per reduced sample
/// and one column per conditional-prior completion.
///
/// The reduced likelihood of row `i` is `log_lik_approx[i]` when given, in
/// which case the weights are rescaled to unit overall mean, and the row's
/// log-mean-exp otherwise. `n_mc` is the number of completions the
/// sampler used to approximate the reduced likelihood.
pub fn bound_from_log_lik(log_lik: &DMatrix<f64>, log_lik_approx: Option<&[f64]>, n_mc: usize) -> Result<BoundEstimate> {
    let (m, k) = log_lik.shape();
    if m == 0 {
        return Err(invalid!("no reduced samples"));
    }
    if k < 2 {
        return Err(invalid!("need at least 2 completions per reduced sample, got {k}"));
    }
    if n_mc == 0 {
        return Err(invalid!("n_mc must be positive"));
    }
    if let Some(a) = log_lik_approx {
        if a.len() != m {
            return Err(invalid!("{} reduced log-likelihoods for {m} rows", a.len()));
        }
    }
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let row: Vec<f64> = log_lik.row(i).iter().copied().collect();
        let offset = match log_lik_approx {
            Some(a) => a[i],
            None => log_mean_exp(&row),
        };
        if !offset.is_finite() {
            return Err(CisError::Degeneracy { ess: 0.0, context: alloc::format!("reduced likelihood of sample {i} vanishes") });
        }
        rows.push(row.iter().map(|l| l - offset).collect::<Vec<f64>>());
    }
    // self-normalize to unit mean in log space, as the weighted estimators do
    let shift = if log_lik_approx.is_some() {
        let all: Vec<f64> = rows.iter().flatten().copied().collect();
        let s = log_mean_exp(&all);
        if !s.is_finite() {
            return Err(CisError::Degeneracy { ess: 0.0, context: "all weights vanish".into() });
        }
        s
    } else {
        0.0
    };
    let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(|l| libm::exp(l - shift)).collect()).collect();
    let mut row_sqrt = Vec::with_capacity(m);
    let mut row_w = Vec::with_capacity(m);
    let mut row_var = Vec::with_capacity(m);
    for w in &rows {
        let s: Vec<f64> = w.iter().map(|v| sqrt(*v)).collect();
        let mw = mean(w);
        row_sqrt.push(mean(&s));
        row_w.push(mw);
        row_var.push(w.iter().map(|v| (v - mw) * (v - mw)).sum::<f64>() / (k - 1) as f64);
    }
    let e_sqrt_w = mean(&row_sqrt);
    let se = if m > 1 { sqrt(crate::stats::sample_variance(&row_sqrt) / m as f64) } else { f64::NAN };
    Ok(BoundEstimate::from_terms(e_sqrt_w, mean(&row_w), mean(&row_var), n_mc, se))
}

/// Draws `n_perp` conditional-prior completions for every reduced sample,
/// evaluates the exact likelihood on each and returns the bound terms.
pub fn bound_estimate<L, R>(
    lik: &L,
    proj: &Projector,
    prior: &GaussianDist,
    reduced_samples: &[DVector<f64>],
    n_perp: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<BoundEstimate>
where
    L: LogLikelihood + ?Sized,
    R: Rng + ?Sized,
{
    if n_perp < 2 {
        return Err(invalid!("need at least 2 completions per reduced sample, got {n_perp}"));
    }
    let m_perp = perp_prior_mean(prior, proj);
    let k = proj.dim() - proj.rank();
    let mut xs = Vec::with_capacity(reduced_samples.len() * n_perp);
    for z in reduced_samples {
        if z.len() != proj.rank() {
            return Err(invalid!("reduced sample has length {}, rank is {}", z.len(), proj.rank()));
        }
        for _ in 0..n_perp {
            let zp = &m_perp + standard_normal(rng, k);
            xs.push(proj.reconstruct(z, &zp));
        }
    }
    let ll = lik.log_likelihood_batch(&xs)?;
    let mat = DMatrix::from_row_slice(reduced_samples.len(), n_perp, &ll);
    bound_from_log_lik(&mat, None, n_mc)
}

/// `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    check_weights(weights)?;
    Ok(crate::stats::ess(weights))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    pub ess: f64,
    /// Fraction of weights above 1 after rescaling to unit mean.
    pub fraction_above_one: f64,
    pub max_normalized: f64,
    /// Shannon entropy of the normalized weights, in nats.
    pub entropy: f64,
}

pub fn weight_stats(weights: &[f64]) -> Result<WeightStats> {
    check_weights(weights)?;
    let n = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    let norm: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let above = norm.iter().filter(|w| **w * n > 1.0).count() as f64 / n;
    let max_normalized = norm.iter().copied().fold(0.0, f64::max);
    let entropy = -norm.iter().filter(|w| **w > 0.0).map(|w| w * log(*w)).sum::<f64>();
    Ok(WeightStats { ess: crate::stats::ess(&norm), fraction_above_one: above, max_normalized, entropy })
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(invalid!("no weights"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid!("weights must be finite and nonnegative"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(CisError::Degeneracy { ess: 0.0, context: "all weights are zero".into() });
    }
    Ok(())
}

/// `KL(p || q)` between two Gaussians.
pub fn gaussian_kld(p: &GaussianDist, q: &GaussianDist) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(invalid!("dimensions differ: {} vs {}", p.dim(), q.dim()));
    }
    let n = p.dim() as f64;
    let trace = q.cov().solve_matrix(p.cov().matrix()).trace();
    let maha = q.cov().inv_quad_form(&(q.mean() - p.mean()));
    let kld = 0.5 * (trace + maha - n + q.cov().log_det() - p.cov().log_det());
    Ok(kld.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    /// `values[k]` is the lag-`k` autocorrelation, `values[0] = 1`.
    pub values: Vec<f64>,
    /// The chain had zero variance; lags above 0 are reported as 0.
    pub constant: bool,
}

/// Biased autocorrelation estimator up to `max_lag`.
pub fn autocorrelation(chain: &[f64], max_lag: usize) -> Result<Autocorrelation> {
    let n = chain.len();
    if n <= max_lag {
        return Err(invalid!("chain of length {n} is too short for lag {max_lag}"));
    }
    let m = mean(chain);
    let c: Vec<f64> = chain.iter().map(|x| x - m).collect();
    let gamma0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(1.0);
    if gamma0 <= 0.0 {
        values.resize(max_lag + 1, 0.0);
        return Ok(Autocorrelation { values, constant: true });
    }
    for k in 1..=max_lag {
        let g = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        values.push(g / gamma0);
    }
    Ok(Autocorrelation { values, constant: false })
}

/// Cumulative share of each informed mode in each block of variables.
///
/// The contribution of mode `k` to block `b` is the squared norm of the rows
/// of column `k` of `V_r` belonging to `b`, divided by the squared norm of the
/// whole column. Contributions are summed over modes and scaled so that each
/// block ends at 1; a block that no mode touches stays at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalContribution {
    /// Blocks by rows, modes by columns.
    pub cumulative: DMatrix<f64>,
    /// Unnormalized per-mode shares, same layout.
    pub shares: DMatrix<f64>,
}

pub fn modal_contribution(proj: &Projector, blocks: &[Vec<usize>]) -> Result<ModalContribution> {
    let v = proj.v_r();
    let (n, r) = v.shape();
    for b in blocks {
        if let Some(i) = b.iter().find(|i| **i >= n) {
            return Err(invalid!("block index {i} out of range for dimension {n}"));
        }
    }
    let mut shares = DMatrix::zeros(blocks.len(), r);
    for k in 0..r {
        let col = v.column(k);
        let total = col.norm_squared();
        if total == 0.0 {
            continue;
        }
        for (bi, b) in blocks.iter().enumerate() {
            shares[(bi, k)] = b.iter().map(|i| col[*i] * col[*i]).sum::<f64>() / total;
        }
    }
    let mut cumulative = DMatrix::zeros(blocks.len(), r);
    for bi in 0..blocks.len() {
        let total: f64 = shares.row(bi).sum();
        let mut acc = 0.0;
        for k in 0..r {
            acc += shares[(bi, k)];
            cumulative[(bi, k)] = if total > 0.0 { acc / total } else { 0.0 };
        }
    }
    Ok(ModalContribution { cumulative, shares })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use crate::stats::ess as raw_ess;
    use libm::exp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_weights_have_zero_distance() {
        let h = hellinger_sq_from_weights(&[1.0; 8]).unwrap();
        assert_eq!(h.hellinger_sq, 0.0);
        assert!(!h.unreliable && !h.clipped);
    }

    #[test]
    fn two_point_hand_value() {
        let h = hellinger_sq_from_weights(&[2.0, 0.0]).unwrap();
        assert!((h.var_sqrt_w - 0.5).abs() < 1e-15);
        assert!((h.hellinger_sq - (1.0 - sqrt(0.5))).abs() < 1e-15);
        assert!((h.hellinger_sq - 0.2929).abs() < 1e-4);
    }

    #[test]
    fn off_mean_weights_are_flagged() {
        assert!(hellinger_sq_from_weights(&[3.0, 3.0]).unwrap().unreliable);
        assert!(hellinger_sq_from_weights(&[]).is_err());
    }

    /// Discrete pair against the defining integral `1/2 sum (sqrt p - sqrt q)^2`.
    #[test]
    fn discrete_identity_matches_direct_sum() {
        let p = [0.1, 0.25, 0.3, 0.05, 0.3];
        let q = [0.2, 0.2, 0.2, 0.3, 0.1];
        let w: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a / b).collect();
        let direct = 0.5 * p.iter().zip(&q).map(|(a, b)| (sqrt(*a) - sqrt(*b)).powi(2)).sum::<f64>();
        let h = hellinger_sq_weighted(&w, &q).unwrap();
        assert!((h.hellinger_sq - direct).abs() < 1e-12);
    }

    #[test]
    fn bound_vanishes_for_exact_reduction() {
        let m = DMatrix::from_element(5, 4, -2.0);
        let b = bound_from_log_lik(&m, None, 3).unwrap();
        assert!(b.e_cond_var_w.abs() < 1e-15);
        assert!(b.hellinger_sq_bound.abs() < 1e-15);
        assert!((b.e_sqrt_w - 1.0).abs() < 1e-15);
        assert!(bound_from_log_lik(&DMatrix::zeros(3, 1), None, 3).is_err());
    }

    #[test]
    fn bound_formula() {
        // row 0: w = (2, 0) ; row 1: w = (1, 1)
        let m = DMatrix::from_row_slice(2, 2, &[log(2.0), f64::NEG_INFINITY, 0.0, 0.0]);
        let b = bound_from_log_lik(&m, Some(&[0.0, 0.0]), 4).unwrap();
        let e = (sqrt(2.0) / 2.0 + 1.0) / 2.0;
        assert!((b.e_sqrt_w - e).abs() < 1e-15);
        assert!((b.var_sqrt_w - (1.0 - e * e)).abs() < 1e-15);
        assert!((b.e_cond_var_w - 1.0).abs() < 1e-15);
        let expected = 1.0 - sqrt(1.0 - b.var_sqrt_w) + 0.5;
        assert!((b.hellinger_sq_bound - expected).abs() < 1e-15);
    }

    #[test]
    fn bound_ignores_unused_perp_directions() {
        let prior = GaussianDist::standard(3);
        let proj = Projector::from_basis(DMatrix::identity(3, 3), prior.cov(), 1, DVector::from_element(3, 1.0)).unwrap();
        let lik = crate::models::FnLikelihood::new(3, |x: &DVector<f64>| -0.5 * x[0] * x[0]);
        let zs: Vec<_> = (0..10).map(|i| DVector::from_element(1, i as f64 * 0.1)).collect();
        let b = bound_estimate(&lik, &proj, &prior, &zs, 4, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(b.e_cond_var_w < 1e-24);
        assert!(b.hellinger_sq_bound < 1e-12);
        assert!(bound_estimate(&lik, &proj, &prior, &zs, 1, 4, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn ess_values() {
        assert!((ess(&[3.0; 10]).unwrap() - 10.0).abs() < 1e-12);
        assert!((ess(&[0.0, 0.0, 7.0]).unwrap() - 1.0).abs() < 1e-12);
        let w = [4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        assert!((ess(&w).unwrap() - 100.0 / 22.0).abs() < 1e-12);
        assert!(matches!(ess(&[0.0, 0.0]), Err(CisError::Degeneracy { .. })));
    }

    #[test]
    fn weight_stats_extremes() {
        let s = weight_stats(&[1.0; 4]).unwrap();
        assert_eq!(s.fraction_above_one, 0.0);
        assert!((s.max_normalized - 0.25).abs() < 1e-15);
        assert!((s.entropy - log(4.0)).abs() < 1e-12);
        let s = weight_stats(&[0.0, 5.0, 0.0]).unwrap();
        assert_eq!(s.entropy, 0.0);
        assert!((s.fraction_above_one - 1.0 / 3.0).abs() < 1e-15);
        assert!((raw_ess(&[0.0, 5.0, 0.0]) - s.ess).abs() < 1e-15);
    }

    fn g1(m: f64, v: f64) -> GaussianDist {
        GaussianDist::new(DVector::from_element(1, m), SpdMatrix::from_diagonal(&DVector::from_element(1, v)).unwrap()).unwrap()
    }

    #[test]
    fn kld_closed_forms() {
        assert!(gaussian_kld(&g1(0.0, 1.0), &g1(0.0, 1.0)).unwrap().abs() < 1e-15);
        assert!((gaussian_kld(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        assert!(gaussian_kld(&g1(0.0, 1.0), &GaussianDist::standard(2)).is_err());
    }

    #[test]
    fn kld_matches_quadrature() {
        let p = g1(0.3, 0.7);
        let q = g1(-0.4, 1.9);
        let h = 1e-4;
        let mut acc = 0.0;
        for i in 0..200_000 {
            let x = DVector::from_element(1, -10.0 + (i as f64 + 0.5) * h);
            let lp = p.log_pdf(&x).unwrap();
            acc += exp(lp) * (lp - q.log_pdf(&x).unwrap()) * h;
        }
        assert!((gaussian_kld(&p, &q).unwrap() - acc).abs() < 1e-8);
    }

    #[test]
    fn acf_white_noise_and_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let e: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng, 1)[0]).collect();
        let acf = autocorrelation(&e, 10).unwrap();
        let band = 2.0 / sqrt(n as f64);
        // 10 lags at 95% each; allow the 4-sigma band to keep the test stable
        assert!(acf.values[1..].iter().all(|v| v.abs() < 2.0 * band), "{:?}", acf.values);
        let mut x = alloc::vec![0.0; n];
        for t in 1..n {
            x[t] = 0.9 * x[t - 1] + sqrt(1.0 - 0.81) * e[t];
        }
        let acf = autocorrelation(&x, 5).unwrap();
        for k in 1..=5 {
            assert!((acf.values[k] - 0.9f64.powi(k as i32)).abs() < 0.05, "lag {k}: {}", acf.values[k]);
        }
    }

    #[test]
    fn acf_constant_chain() {
        let a = autocorrelation(&[2.0; 10], 3).unwrap();
        assert!(a.constant);
        assert_eq!(a.values, alloc::vec![1.0, 0.0, 0.0, 0.0]);
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn modal_contribution_single_block() {
        let prior = GaussianDist::standard(4);
        let proj = Projector::from_basis(DMatrix::identity(4, 4), prior.cov(), 2, DVector::from_element(4, 0.5)).unwrap();
        let mc = modal_contribution(&proj, &[alloc::vec![0, 1], alloc::vec![2, 3]]).unwrap();
        assert_eq!(mc.cumulative.row(0).iter().copied().collect::<Vec<_>>(), alloc::vec![0.5, 1.0]);
        assert!(mc.cumulative.row(1).iter().all(|v| *v == 0.0));
        assert!(modal_contribution(&proj, &[alloc::vec![4]]).is_err());
    }
}

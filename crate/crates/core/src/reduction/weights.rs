use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, CisError, Result};
use crate::linalg::symmetrize;
use crate::stats::{ess, normalize_log_weights};

/// Samples drawn from one proposal, with the likelihoods needed to weight
/// them towards the (tempered) posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub samples: Vec<DVector<f64>>,
    /// `log L(x)`.
    pub log_lik: Vec<f64>,
    /// Log of the approximate likelihood the proposal was built from.
    pub log_lik_approx: Vec<f64>,
    /// Tempering exponent the proposal applied to the approximate likelihood.
    pub beta: f64,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Prior draws: the approximation is the constant mean likelihood.
    pub fn from_prior(samples: Vec<DVector<f64>>, log_lik: Vec<f64>) -> Self {
        let c = crate::stats::log_mean_exp(&log_lik);
        let n = log_lik.len();
        Self { samples, log_lik, log_lik_approx: alloc::vec![c; n], beta: 1.0 }
    }

    /// `beta_target * log L - beta * log L_approx`.
    pub fn log_weights(&self, beta_target: f64) -> Vec<f64> {
        self.log_lik
            .iter()
            .zip(&self.log_lik_approx)
            .map(|(l, a)| {
                let v = beta_target * l - self.beta * a;
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect()
    }
}

/// An archive of weighted batches. Weights are recomputed on demand for any
/// target exponent, so earlier batches stay usable as the target moves.
#[derive(Debug, Clone, Default)]
pub struct WeightedSampleSet {
    dim: usize,
    batches: Vec<Batch>,
}

impl WeightedSampleSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, batches: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, batch: Batch) -> Result<()> {
        let n = batch.samples.len();
        if batch.log_lik.len() != n || batch.log_lik_approx.len() != n {
            return Err(invalid!(
                "batch has {n} samples, {} log-likelihoods and {} approximations",
                batch.log_lik.len(),
                batch.log_lik_approx.len()
            ));
        }
        if let Some(x) = batch.samples.iter().find(|x| x.len() != self.dim) {
            return Err(invalid!("sample has length {}, set is {}-dimensional", x.len(), self.dim));
        }
        self.batches.push(batch);
        Ok(())
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(Batch::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.batches.iter().flat_map(|b| b.samples.iter())
    }

    /// All samples, one per row.
    pub fn sample_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len(), self.dim);
        for (i, x) in self.samples().enumerate() {
            m.set_row(i, &x.transpose());
        }
        m
    }

    /// Weighted mean and Bessel-corrected covariance at `beta_target`, with
    /// the pooled weights and their ESS.
    pub fn estimate(&self, beta_target: f64) -> Result<WmcEstimate> {
        let weights = wmc_weights(self, beta_target)?;
        let samples: Vec<&DVector<f64>> = self.samples().collect();
        let mean = weighted_mean_refs(&samples, &weights)?;
        let cov = weighted_cov_refs(&samples, &weights, &mean)?;
        Ok(WmcEstimate { ess: ess(&weights), mean, cov, weights })
    }
}

#[derive(Debug, Clone)]
pub struct WmcEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub ess: f64,
}

/// Self-normalized weights over every sample of the set, in storage order.
pub fn wmc_weights(set: &WeightedSampleSet, beta_target: f64) -> Result<Vec<f64>> {
    let per_batch: Vec<Vec<f64>> = set.batches.iter().map(|b| b.log_weights(beta_target)).collect();
    pooled_weights(&per_batch)
}

/// Normalizes each batch's log-weights separately, then gives each batch a
/// share of the total mass proportional to its ESS. The result sums to one.
pub fn pooled_weights(log_weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut normalized = Vec::with_capacity(log_weights.len());
    let mut masses = Vec::with_capacity(log_weights.len());
    for lw in log_weights {
        let (w, lse) = normalize_log_weights(lw);
        if lse.is_finite() {
            masses.push(ess(&w));
            normalized.push(w);
        } else {
            masses.push(0.0);
            normalized.push(alloc::vec![0.0; lw.len()]);
        }
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(CisError::Degeneracy { ess: 0.0, context: "every weight underflowed".into() });
    }
    Ok(normalized
        .into_iter()
        .zip(&masses)
        .flat_map(|(w, m)| {
            let share = m / total;
            w.into_iter().map(move |v| v * share)
        })
        .collect())
}

fn check_weights(n: usize, weights: &[f64]) -> Result<f64> {
    if weights.len() != n {
        return Err(invalid!("{} weights for {n} samples", weights.len()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid!("weights must be finite and nonnegative"));
    }
    let s: f64 = weights.iter().sum();
    if !(s > 0.0) {
        return Err(CisError::Degeneracy { ess: 0.0, context: "all weights are zero".into() });
    }
    Ok(s)
}

/// `sum w_i x_i / sum w_i`.
pub fn weighted_mean(samples: &[DVector<f64>], weights: &[f64]) -> Result<DVector<f64>> {
    let refs: Vec<&DVector<f64>> = samples.iter().collect();
    weighted_mean_refs(&refs, weights)
}

fn weighted_mean_refs(samples: &[&DVector<f64>], weights: &[f64]) -> Result<DVector<f64>> {
    let s = check_weights(samples.len(), weights)?;
    let mut m = DVector::zeros(samples[0].len());
    for (x, w) in samples.iter().zip(weights) {
        m.axpy(*w, x, 1.0);
    }
    Ok(m / s)
}

/// Weighted covariance with the reliability-weights Bessel factor
/// `S / (S^2 - sum w^2)`, `S = sum w`. Fails when the weights are
/// concentrated on a single sample.
pub fn weighted_cov(samples: &[DVector<f64>], weights: &[f64]) -> Result<DMatrix<f64>> {
    let refs: Vec<&DVector<f64>> = samples.iter().collect();
    let mean = weighted_mean_refs(&refs, weights)?;
    weighted_cov_refs(&refs, weights, &mean)
}

fn weighted_cov_refs(samples: &[&DVector<f64>], weights: &[f64], mean: &DVector<f64>) -> Result<DMatrix<f64>> {
    let s = check_weights(samples.len(), weights)?;
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    let denom = s * s - s2;
    if denom <= 1e-12 * s * s {
        return Err(CisError::Degeneracy {
            ess: ess(weights),
            context: "weighted covariance needs more than one effective sample".into(),
        });
    }
    let n = mean.len();
    let mut acc = DMatrix::zeros(n, n);
    for (x, w) in samples.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let d = *x - mean;
        acc.ger(*w, &d, &d, 1.0);
    }
    Ok(symmetrize(&(acc * (s / denom))))
}

/// `sum w_i g_i g_i^T / sum w_i` with the gradients `g_i` as rows.
pub fn wmc_fisher(weights: &[f64], grads: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = check_weights(grads.nrows(), weights)?;
    let n = grads.ncols();
    let mut acc = DMatrix::zeros(n, n);
    for (row, w) in grads.row_iter().zip(weights) {
        let g = row.transpose();
        acc.ger(*w, &g, &g, 1.0);
    }
    Ok(symmetrize(&(acc / s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::exp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn equal_likelihoods_give_uniform_weights() {
        let mut set = WeightedSampleSet::new(1);
        set.push(Batch {
            samples: alloc::vec![v(&[0.0]), v(&[1.0]), v(&[2.0])],
            log_lik: alloc::vec![-3.0, 1.0, 5.0],
            log_lik_approx: alloc::vec![-3.0, 1.0, 5.0],
            beta: 1.0,
        })
        .unwrap();
        let w = wmc_weights(&set, 1.0).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn prior_batch_weights_follow_likelihood() {
        let mut set = WeightedSampleSet::new(1);
        set.push(Batch::from_prior(alloc::vec![v(&[0.0]), v(&[1.0])], alloc::vec![0.0, -10.0])).unwrap();
        let w = wmc_weights(&set, 1.0).unwrap();
        assert!((w[1] / w[0] - exp(-10.0)).abs() < 1e-18);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn underflow_is_degeneracy() {
        let mut set = WeightedSampleSet::new(1);
        set.push(Batch::from_prior(alloc::vec![v(&[0.0])], alloc::vec![f64::NEG_INFINITY])).unwrap();
        assert!(matches!(wmc_weights(&set, 1.0), Err(CisError::Degeneracy { .. })));
    }

    #[test]
    fn two_point_moments() {
        let xs = [v(&[0.0]), v(&[2.0])];
        assert!((weighted_mean(&xs, &[1.0, 1.0]).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((weighted_cov(&xs, &[1.0, 1.0]).unwrap()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!(matches!(weighted_cov(&xs, &[1.0, 0.0]), Err(CisError::Degeneracy { .. })));
    }

    #[test]
    fn equal_weights_reduce_to_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<_> = (0..40).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0))).collect();
        let c = weighted_cov(&xs, &[2.5; 40]).unwrap();
        let m = DMatrix::from_fn(40, 3, |i, j| xs[i][j]);
        let mean = m.row_mean();
        let centred = DMatrix::from_fn(40, 3, |i, j| m[(i, j)] - mean[j]);
        let oracle = centred.transpose() * &centred / 39.0;
        assert!((c - oracle).abs().max() < 1e-13);
    }

    #[test]
    fn weighted_cov_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<_> = (0..25).map(|_| DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0))).collect();
        let w: Vec<f64> = (0..25).map(|_| rng.random_range(0.0..3.0)).collect();
        let s: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        let mean = xs.iter().zip(&w).fold(DVector::zeros(4), |acc, (x, wi)| acc + x * *wi) / s;
        let oracle =
            xs.iter().zip(&w).fold(DMatrix::zeros(4, 4), |acc, (x, wi)| acc + (x - &mean) * (x - &mean).transpose() * *wi)
                * (s / (s * s - s2));
        assert!((weighted_cov(&xs, &w).unwrap() - oracle).abs().max() < 1e-10);
    }

    #[test]
    fn pooled_batches_share_mass_by_ess() {
        let w = pooled_weights(&[alloc::vec![0.0, 0.0], alloc::vec![0.0, f64::NEG_INFINITY]]).unwrap();
        // first batch has ESS 2, second ESS 1
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[3], 0.0);
    }

    #[test]
    fn fisher_of_single_sample() {
        let g = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let h = wmc_fisher(&[1.0], &g).unwrap();
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(h.iter().filter(|x| **x != 0.0).count(), 1);
        let g2 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 5.0, 5.0]);
        let h2 = wmc_fisher(&[1.0, 0.0], &g2).unwrap();
        assert_eq!(h2, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn push_validates_shapes() {
        let mut set = WeightedSampleSet::new(2);
        let bad =
            Batch { samples: alloc::vec![v(&[0.0])], log_lik: alloc::vec![0.0], log_lik_approx: alloc::vec![0.0], beta: 1.0 };
        assert!(set.push(bad).is_err());
        let bad =
            Batch { samples: alloc::vec![v(&[0.0, 0.0])], log_lik: alloc::vec![], log_lik_approx: alloc::vec![0.0], beta: 1.0 };
        assert!(set.push(bad).is_err());
    }
}

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, CisError, Result};
use crate::stats::{ess, log_mean_exp, normalize_log_weights};

/// Step taken when the effective sample size is already below target just
/// above the previous exponent.
pub const MIN_BETA_INCREMENT: f64 = 1e-3;

/// ESS of `exp(beta * log_lik - offsets)`, where each run of `group`
/// consecutive entries is one particle weighted by its mean.
fn ess_at(beta: f64, log_lik: &[f64], offsets: &[f64], group: usize) -> f64 {
    let lw: Vec<f64> = log_lik.iter().zip(offsets).map(|(l, o)| beta * l - o).collect();
    let lw: Vec<f64> = if group == 1 { lw } else { lw.chunks(group).map(log_mean_exp).collect() };
    let (w, lse) = normalize_log_weights(&lw);
    if lse.is_finite() {
        ess(&w)
    } else {
        0.0
    }
}

/// Next tempering exponent in `(prev_beta, 1]`.
///
/// `offsets[i]` is the log of the tempered density the particle was drawn
/// from, relative to the prior (zero for prior draws). Returns 1 when the
/// effective sample size at 1 is at least `tau`, otherwise bisects for
/// `ESS(beta) = tau`.
pub fn update_beta(prev_beta: f64, log_lik: &[f64], offsets: &[f64], tau: f64) -> Result<f64> {
    update_beta_grouped(prev_beta, log_lik, offsets, 1, tau)
}

/// [`update_beta`] for particles that carry `group` completions each, stored
/// consecutively. A particle's weight is the mean over its completions and
/// `tau` is relative to the number of particles.
pub fn update_beta_grouped(prev_beta: f64, log_lik: &[f64], offsets: &[f64], group: usize, tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&prev_beta) {
        return Err(invalid!("previous exponent must lie in [0, 1), got {prev_beta}"));
    }
    if log_lik.len() != offsets.len() || log_lik.is_empty() {
        return Err(invalid!("{} log-likelihoods for {} offsets", log_lik.len(), offsets.len()));
    }
    if group == 0 || !log_lik.len().is_multiple_of(group) {
        return Err(invalid!("{} log-likelihoods do not split into groups of {group}", log_lik.len()));
    }
    let particles = log_lik.len() / group;
    if !(tau > 0.0 && tau < particles as f64) {
        return Err(invalid!("ESS target {tau} must lie in (0, {particles})"));
    }
    let ess = |beta: f64| ess_at(beta, log_lik, offsets, group);
    if ess(1.0) >= tau {
        return Ok(1.0);
    }
    let mut lo = prev_beta;
    let mut hi = 1.0;
    if ess(lo) < tau {
        return Ok((prev_beta + MIN_BETA_INCREMENT).min(1.0));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ess(mid) >= tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let beta = 0.5 * (lo + hi);
    Ok(if beta > prev_beta { beta } else { (prev_beta + MIN_BETA_INCREMENT).min(1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleScheme {
    Multinomial,
    Systematic,
}

/// Caps every normalized weight at `c / N` and spreads the excess over the
/// uncapped weights in proportion to their size, repeating until no weight
/// exceeds the cap.
pub fn clip_weights(weights: &[f64], c: f64) -> Result<Vec<f64>> {
    let n = weights.len();
    if !(c >= 1.0) {
        return Err(invalid!("clipping constant must be at least 1, got {c}"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(CisError::Degeneracy { ess: 0.0, context: "cannot clip all-zero weights".into() });
    }
    let cap = c / n as f64;
    let mut w: Vec<f64> = weights.iter().map(|v| v / total).collect();
    let mut capped = alloc::vec![false; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if !capped[i] && w[i] > cap {
                capped[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let free: f64 = (0..n).filter(|&i| !capped[i]).map(|i| w[i]).sum();
        let budget = 1.0 - cap * capped.iter().filter(|c| **c).count() as f64;
        for i in 0..n {
            if capped[i] {
                w[i] = cap;
            } else if free > 0.0 {
                w[i] *= budget / free;
            }
        }
        if !(free > 0.0) {
            break;
        }
    }
    Ok(w)
}

/// Indices of `count` particles drawn according to `weights` (any positive
/// scale). With `clip = Some(c)` the weights are first capped at `c / N`,
/// `N` being the number of weights.
pub fn resample<R: Rng + ?Sized>(
    weights: &[f64],
    count: usize,
    scheme: ResampleScheme,
    clip: Option<f64>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = weights.len();
    if n == 0 {
        return Err(invalid!("nothing to resample"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid!("weights must be finite and nonnegative"));
    }
    let w = match clip {
        Some(c) => clip_weights(weights, c)?,
        None => {
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                return Err(CisError::Degeneracy { ess: 0.0, context: "cannot resample all-zero weights".into() });
            }
            weights.iter().map(|v| v / total).collect()
        }
    };
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in &w {
        acc += v;
        cdf.push(acc);
    }
    let last = cdf[n - 1];
    let pick = |u: f64| cdf.partition_point(|c| *c <= u * last).min(n - 1);
    Ok(match scheme {
        ResampleScheme::Multinomial => (0..count).map(|_| pick(rng.random::<f64>())).collect(),
        ResampleScheme::Systematic => {
            let u0: f64 = rng.random::<f64>();
            (0..count).map(|i| pick((u0 + i as f64) / count as f64)).collect()
        }
    })
}

/// Exponentiated, self-normalized weights.
pub(crate) fn weights_from_log(log_w: &[f64]) -> Result<Vec<f64>> {
    let (w, lse) = normalize_log_weights(log_w);
    if !lse.is_finite() {
        return Err(CisError::Degeneracy { ess: 0.0, context: "every weight underflowed".into() });
    }
    Ok(w.into_iter().map(|v| if v.is_nan() { 0.0 } else { v }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::{log, sqrt};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_likelihood_jumps_to_one() {
        assert_eq!(update_beta(0.0, &[-3.0; 10], &[0.0; 10], 5.0).unwrap(), 1.0);
    }

    /// Closed form for two particles with log L = (0, -10) from the prior:
    /// with a = exp(-10 beta), ESS = (1 + a)^2 / (1 + a^2) = 1.5 gives
    /// a^2 - 4a + 1 = 0, so a = 2 - sqrt(3).
    #[test]
    fn two_particle_target() {
        let beta = update_beta(0.0, &[0.0, -10.0], &[0.0, 0.0], 1.5).unwrap();
        let oracle = -log(2.0 - sqrt(3.0)) / 10.0;
        assert!((beta - oracle).abs() < 1e-10, "{beta} vs {oracle}");
        assert!((beta - 0.1317).abs() < 1e-4);
    }

    /// Particles A with log L = (0, 0) and B with (-10, -20): with
    /// a = exp(-10 beta), B weighs w = (a + a^2) / 2 against 1, and
    /// ESS = 1.5 needs w = 2 - sqrt(3), so a = (sqrt(1 + 8w) - 1) / 2.
    #[test]
    fn grouped_two_particle_target() {
        let beta = update_beta_grouped(0.0, &[0.0, 0.0, -10.0, -20.0], &[0.0; 4], 2, 1.5).unwrap();
        let w = 2.0 - sqrt(3.0);
        let oracle = -log((sqrt(1.0 + 8.0 * w) - 1.0) / 2.0) / 10.0;
        assert!((beta - oracle).abs() < 1e-10, "{beta} vs {oracle}");
    }

    #[test]
    fn identical_completions_match_single_particles() {
        let ll = [0.0, -1.0, -5.0, -20.0, -40.0];
        let doubled: Vec<f64> = ll.iter().flat_map(|l| [*l, *l]).collect();
        let a = update_beta(0.0, &ll, &[0.0; 5], 2.5).unwrap();
        let b = update_beta_grouped(0.0, &doubled, &[0.0; 10], 2, 2.5).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(update_beta_grouped(0.0, &doubled, &[0.0; 10], 3, 2.5).is_err());
        assert!(update_beta_grouped(0.0, &doubled, &[0.0; 10], 2, 5.0).is_err());
    }

    #[test]
    fn beta_strictly_increases() {
        let ll = [0.0, -1.0, -5.0, -20.0, -40.0];
        let mut beta = 0.0;
        let mut stages = 0;
        while beta < 1.0 {
            let offsets: Vec<f64> = ll.iter().map(|l| beta * l).collect();
            let next = update_beta(beta, &ll, &offsets, 2.5).unwrap();
            assert!(next > beta);
            beta = next;
            stages += 1;
        }
        assert!(stages < 100);
    }

    #[test]
    fn invalid_update_arguments() {
        assert!(update_beta(1.0, &[0.0, 1.0], &[0.0, 0.0], 1.0).is_err());
        assert!(update_beta(0.0, &[0.0, 1.0], &[0.0, 0.0], 2.0).is_err());
        assert!(update_beta(0.0, &[0.0], &[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn single_unit_weight_copies_that_particle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for scheme in [ResampleScheme::Multinomial, ResampleScheme::Systematic] {
            let idx = resample(&[0.0, 0.0, 1.0, 0.0], 4, scheme, None, &mut rng).unwrap();
            assert_eq!(idx, alloc::vec![2; 4]);
        }
        assert!(resample(&[0.0, 0.0], 2, ResampleScheme::Multinomial, None, &mut rng).is_err());
    }

    #[test]
    fn uniform_systematic_counts_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10;
        let mut counts = [0usize; 10];
        for _ in 0..1000 {
            for i in resample(&[1.0; 10], 10, ResampleScheme::Systematic, None, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        // expected 1000 per index; systematic is never worse than multinomial
        let sd = sqrt(1000.0 * n as f64 * 0.1 * 0.9);
        assert!(counts.iter().all(|c| (*c as f64 - 1000.0).abs() < 4.0 * sd), "{counts:?}");
    }

    #[test]
    fn multinomial_frequencies_match_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = [0.5, 0.3, 0.2];
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            for i in resample(&w, 3, ResampleScheme::Multinomial, None, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let total = 30_000.0;
        for (c, p) in counts.iter().zip(w) {
            let sd = sqrt(total * p * (1.0 - p));
            assert!((*c as f64 - total * p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn clipping_caps_the_dominant_weight() {
        let n = 100;
        let mut w = alloc::vec![0.01 / 99.0; n];
        w[0] = 0.99;
        let c = clip_weights(&w, 10.0).unwrap();
        assert!((c[0] - 10.0 / n as f64).abs() < 1e-15);
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.iter().all(|v| *v <= 10.0 / n as f64 + 1e-15));
        // order among the uncapped weights is preserved
        assert!((c[1] - c[2]).abs() < 1e-18);
    }

    #[test]
    fn clipping_cascades() {
        let w = [0.5, 0.3, 0.1, 0.05, 0.05];
        let c = clip_weights(&w, 1.25).unwrap();
        assert!(c.iter().all(|v| *v <= 0.25 + 1e-15));
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(clip_weights(&w, 0.5).is_err());
    }
}

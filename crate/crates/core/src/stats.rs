use libm::{exp, log};

/// `log(sum(exp(v)))` without overflow. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| exp(v - max)).sum();
    max + log(sum)
}

pub(crate) fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - log(values.len() as f64)
}

/// Self-normalized weights from log-weights, plus the log normalizer.
pub(crate) fn normalize_log_weights(log_w: &[f64]) -> (alloc::vec::Vec<f64>, f64) {
    let lse = log_sum_exp(log_w);
    let w = log_w.iter().map(|v| exp(v - lse)).collect();
    (w, lse)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// `(sum w)^2 / sum w^2`, invariant to the scale of `w`.
pub(crate) fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankMode {
    /// Rank at the largest relative gap `(lambda_{i+1} - lambda_i) / lambda_i`,
    /// pushed to the last later index whose relative variation still exceeds
    /// `variation`.
    Plateau { variation: f64 },
    /// Number of eigenvalues at or below the threshold.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRule {
    pub mode: RankMode,
    pub r_min: usize,
    pub r_max: usize,
}

impl RankRule {
    pub fn plateau(r_min: usize, r_max: usize) -> Self {
        Self { mode: RankMode::Plateau { variation: 0.10 }, r_min, r_max }
    }

    pub fn threshold(threshold: f64, r_min: usize, r_max: usize) -> Self {
        Self { mode: RankMode::Threshold(threshold), r_min, r_max }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.r_min < 1 || self.r_min > self.r_max {
            return Err(invalid!("rank bounds must satisfy 1 <= r_min <= r_max, got {}..{}", self.r_min, self.r_max));
        }
        if self.r_min > n {
            return Err(invalid!("r_min = {} exceeds dimension {n}", self.r_min));
        }
        match self.mode {
            RankMode::Plateau { variation } if !(variation > 0.0) => {
                Err(invalid!("plateau variation must be positive, got {variation}"))
            }
            RankMode::Threshold(t) if !(t > 0.0) => Err(invalid!("rank threshold must be positive, got {t}")),
            _ => Ok(()),
        }
    }
}

/// Picks the rank from eigenvalues of `(C_post, C_prior)` sorted ascending.
/// The result is clamped to `[r_min, min(r_max, n)]`.
pub fn select_rank(eigenvalues: &[f64], rule: &RankRule) -> Result<usize> {
    let n = eigenvalues.len();
    if n == 0 {
        return Err(invalid!("empty spectrum"));
    }
    rule.validate(n)?;
    let raw = match rule.mode {
        RankMode::Plateau { variation } => plateau_rank(eigenvalues, variation, rule.r_min),
        RankMode::Threshold(t) => eigenvalues.iter().take_while(|l| **l <= t).count(),
    };
    Ok(raw.clamp(rule.r_min, rule.r_max.min(n)))
}

fn plateau_rank(eigenvalues: &[f64], variation: f64, fallback: usize) -> usize {
    // v[i] compares eigenvalue i+1 to eigenvalue i (0-based); keeping the
    // first i+1 eigenvalues puts the cut right at that gap.
    let v: alloc::vec::Vec<f64> = eigenvalues.windows(2).map(|w| (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE)).collect();
    let Some((best, vmax)) = v.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)) else {
        return fallback;
    };
    if vmax <= variation {
        return fallback;
    }
    let last = (best..v.len()).rev().find(|&j| v[j] > variation).unwrap_or(best);
    last + 1
}

/// Rank bounds that widen over iterations: `first_max` at the first
/// iteration, then `min(r_prev + increment, cap)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSchedule {
    pub first_max: usize,
    pub increment: usize,
    pub cap: usize,
}

impl Default for RankSchedule {
    fn default() -> Self {
        Self { first_max: 5, increment: 2, cap: 10 }
    }
}

impl RankSchedule {
    /// `iteration` counts from 1; `prev_rank` is the previous iteration's rank.
    pub fn r_max(&self, iteration: usize, prev_rank: Option<usize>) -> usize {
        match (iteration, prev_rank) {
            (0 | 1, _) | (_, None) => self.first_max.min(self.cap),
            (_, Some(r)) => (r + self.increment).min(self.cap),
        }
    }

    pub fn rule(&self, base: &RankRule, iteration: usize, prev_rank: Option<usize>) -> RankRule {
        let r_max = self.r_max(iteration, prev_rank).max(base.r_min);
        RankRule { r_max, ..*base }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_after_dominant_gap() {
        let l = [0.01, 0.02, 0.05, 0.98, 0.99, 1.0];
        assert_eq!(select_rank(&l, &RankRule::plateau(1, 6)).unwrap(), 3);
    }

    #[test]
    fn plateau_extends_past_the_gap_while_variation_is_large() {
        // largest gap after index 1, but 0.5 -> 0.8 is still a 60% variation
        let l = [0.01, 0.3, 0.5, 0.8, 0.82, 0.83];
        assert_eq!(select_rank(&l, &RankRule::plateau(1, 6)).unwrap(), 3);
    }

    #[test]
    fn flat_spectrum_gives_minimum() {
        let l = [1.0; 5];
        assert_eq!(select_rank(&l, &RankRule::plateau(2, 5)).unwrap(), 2);
        assert_eq!(select_rank(&[0.5], &RankRule::plateau(1, 3)).unwrap(), 1);
    }

    #[test]
    fn threshold_counts_small_eigenvalues() {
        let l = [0.05, 0.2, 0.55, 0.6, 0.61, 0.9];
        assert_eq!(select_rank(&l, &RankRule::threshold(0.6, 1, 40)).unwrap(), 4);
        assert_eq!(select_rank(&l, &RankRule::threshold(0.6, 1, 2)).unwrap(), 2);
        assert_eq!(select_rank(&l, &RankRule::threshold(0.01, 1, 40)).unwrap(), 1);
    }

    #[test]
    fn invalid_rules() {
        assert!(select_rank(&[], &RankRule::plateau(1, 2)).is_err());
        assert!(select_rank(&[0.1, 0.2], &RankRule::plateau(0, 2)).is_err());
        assert!(select_rank(&[0.1, 0.2], &RankRule::plateau(3, 2)).is_err());
        assert!(select_rank(&[0.1, 0.2], &RankRule::plateau(3, 4)).is_err());
    }

    #[test]
    fn schedule_widens_then_caps() {
        let s = RankSchedule::default();
        assert_eq!(s.r_max(1, None), 5);
        assert_eq!(s.r_max(2, Some(3)), 5);
        assert_eq!(s.r_max(3, Some(9)), 10);
        let rule = s.rule(&RankRule::plateau(1, 100), 2, Some(4));
        assert_eq!(rule.r_max, 6);
    }
}

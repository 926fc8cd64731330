//! Wilcoxon signed-rank test with Pratt's treatment of zero differences.

use super::StatsError;
use crate::math::{normal_cdf, normal_sf};
use alloc::vec;
use alloc::vec::Vec;

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Alternative {
    TwoSided,
    /// The differences tend to be positive.
    Greater,
    /// The differences tend to be negative.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences.
    pub statistic: f64,
    /// Number of non-zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Twice the average rank of each |d|, zeros included, so that tied ranks
/// stay integral.
pub fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..diffs.len()).collect();
    idx.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0u64; diffs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && diffs[idx[j]].abs() == diffs[idx[i]].abs() {
            j += 1;
        }
        // positions i+1 ..= j share the average rank (i + 1 + j) / 2
        let doubled = (i + 1 + j) as u64;
        for &k in &idx[i..j] {
            ranks[k] = doubled;
        }
        i = j;
    }
    ranks
}

/// Number of sign assignments reaching each doubled positive-rank sum.
fn sign_sum_counts(ranks: &[u64]) -> Vec<u128> {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

fn tails_exact(ranks: &[u64], observed: u64) -> (f64, f64) {
    let counts = sign_sum_counts(ranks);
    let all: u128 = 1u128 << ranks.len();
    let obs = observed as usize;
    let upper: u128 = counts[obs..].iter().sum();
    let lower: u128 = counts[..=obs].iter().sum();
    (upper as f64 / all as f64, lower as f64 / all as f64)
}

fn tails_normal(ranks: &[u64], observed: u64) -> (f64, f64) {
    let w = observed as f64 / 2.0;
    let mean: f64 = ranks.iter().map(|&r| r as f64 / 2.0).sum::<f64>() / 2.0;
    let var: f64 = ranks.iter().map(|&r| { let h = r as f64 / 2.0; h * h }).sum::<f64>() / 4.0;
    let sd = libm::sqrt(var);
    (normal_sf((w - mean - 0.5) / sd), normal_cdf((w - mean + 0.5) / sd))
}

/// Signed-rank test of the differences. Zeros take part in the ranking and
/// are then dropped. Up to [`EXACT_MAX_N`] non-zero differences the null
/// distribution is enumerated exactly; above that a continuity-corrected
/// normal approximation with the tie-adjusted variance is used.
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult, StatsError> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let ranks = doubled_ranks(diffs);
    let mut kept = Vec::new();
    let mut observed = 0u64;
    for (&d, &r) in diffs.iter().zip(&ranks) {
        if d != 0.0 {
            kept.push(r);
            if d > 0.0 {
                observed += r;
            }
        }
    }
    if kept.is_empty() {
        return Err(StatsError::AllZero);
    }
    let exact = kept.len() <= EXACT_MAX_N;
    let (upper, lower) = if exact { tails_exact(&kept, observed) } else { tails_normal(&kept, observed) };
    let p_value = match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => 2.0 * upper.min(lower),
    }
    .min(1.0);
    Ok(WilcoxonResult { statistic: observed as f64 / 2.0, n: kept.len(), p_value, exact })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_five() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], Alternative::Greater).unwrap();
        assert_eq!(r.p_value, 1.0 / 32.0);
        assert_eq!(r.statistic, 15.0);
    }

    #[test]
    fn symmetric_pair() {
        assert_eq!(wilcoxon_signed_rank(&[-1.0, 1.0], Alternative::TwoSided).unwrap().p_value, 1.0);
    }

    #[test]
    fn zeros_rejected() {
        assert_eq!(wilcoxon_signed_rank(&[0.0, 0.0], Alternative::TwoSided), Err(StatsError::AllZero));
    }

    #[test]
    fn pratt_ranks_keep_zeros() {
        assert_eq!(doubled_ranks(&[0.0, 1.0, -1.0, 3.0]), vec![2, 5, 5, 8]);
    }
}

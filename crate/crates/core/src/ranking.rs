//! Mutation importance from a trained model: coefficient ranking, the
//! composite ranking that rewards large coefficients on low-weight
//! mutations, and elbow selection on the resulting scree curve.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use libm::{fabs, log};

use crate::domain::MutationId;
use crate::features::{FeatureUniverse, Row};
use crate::math::z_scores;

/// Weights below this magnitude are raised to it before taking logs.
pub const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RankingError {
    #[error("no weighted training rows")]
    NoWeights,
    #[error("need at least {0} values")]
    TooFew(usize),
    #[error("coefficient vector does not match the feature universe")]
    DimensionMismatch,
}

/// Mutation coefficients ordered by decreasing magnitude; ties keep the
/// canonical mutation order. Drug coefficients are left out.
pub fn coefficient_ranking(w: &[f64], universe: &FeatureUniverse) -> Result<Vec<(MutationId, f64)>, RankingError> {
    if w.len() != universe.len() {
        return Err(RankingError::DimensionMismatch);
    }
    let mut out: Vec<(MutationId, f64)> = universe.mutations.iter().copied().zip(w.iter().copied()).collect();
    out.sort_by(|a, b| fabs(b.1).total_cmp(&fabs(a.1)).then(a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankingEntry {
    pub mutation: MutationId,
    pub coefficient: f64,
    /// `-sum log(clamp(|w|, 1e-6, 1))` over the mutation's training weights.
    pub neg_log_weight_sum: f64,
    pub coef_abs_z: f64,
    pub neg_log_weight_sum_z: f64,
    pub ranking_value: f64,
}

/// `-sum_i log(clamp(|w_i|, 1e-6, 1))`.
pub fn neg_log_weight_sum(weights: impl IntoIterator<Item = f64>) -> f64 {
    weights.into_iter().map(|w| -log(fabs(w).clamp(MIN_WEIGHT, 1.0))).sum()
}

/// Ranks mutations by `z(|coef|) * z(L)` in decreasing absolute value.
///
/// With `sum_over_all_rows`, rows lacking the mutation count as weight 0
/// (clamped to 1e-6) instead of being skipped.
pub fn composite_ranking(
    w: &[f64],
    universe: &FeatureUniverse,
    training_rows: &[Row],
    sum_over_all_rows: bool,
) -> Result<Vec<RankingEntry>, RankingError> {
    if w.len() != universe.len() {
        return Err(RankingError::DimensionMismatch);
    }
    if training_rows.is_empty() {
        return Err(RankingError::NoWeights);
    }
    let n_mut = universe.mutations.len();
    let mut per_mutation: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in training_rows {
        for &(j, v) in row.features.iter() {
            if (j as usize) < n_mut {
                per_mutation.entry(j as usize).or_default().push(v);
            }
        }
    }
    let l: Vec<f64> = (0..n_mut)
        .map(|j| {
            let present = per_mutation.get(&j).map(Vec::as_slice).unwrap_or(&[]);
            let missing = if sum_over_all_rows { training_rows.len() - present.len() } else { 0 };
            neg_log_weight_sum(present.iter().copied().chain(core::iter::repeat_n(0.0, missing)))
        })
        .collect();
    let abs_coef: Vec<f64> = w[..n_mut].iter().map(|c| fabs(*c)).collect();
    let zc = z_scores(&abs_coef);
    let zl = z_scores(&l);
    let mut out: Vec<RankingEntry> = (0..n_mut)
        .map(|j| RankingEntry {
            mutation: universe.mutations[j],
            coefficient: w[j],
            neg_log_weight_sum: l[j],
            coef_abs_z: zc[j],
            neg_log_weight_sum_z: zl[j],
            ranking_value: zc[j] * zl[j],
        })
        .collect();
    out.sort_by(|a, b| {
        fabs(b.ranking_value)
            .total_cmp(&fabs(a.ranking_value))
            .then(fabs(b.coefficient).total_cmp(&fabs(a.coefficient)))
            .then(a.mutation.cmp(&b.mutation))
    });
    Ok(out)
}

/// Index of the point farthest from the chord joining the first and last
/// points, after scaling both axes to `[0, 1]`. Ties go to the earliest.
pub fn elbow_select(values: &[f64]) -> Result<usize, RankingError> {
    let n = values.len();
    if n < 3 {
        return Err(RankingError::TooFew(3));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(0);
    }
    let pts: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64 / (n - 1) as f64, (v - lo) / (hi - lo))).collect();
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[n - 1];
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len = libm::sqrt(dx * dx + dy * dy);
    let dist: Vec<f64> = pts.iter().map(|&(x, y)| fabs(dy * (x - x0) - dx * (y - y0)) / len).collect();
    let max = dist.iter().copied().fold(0.0, f64::max);
    Ok(dist.iter().position(|&d| d >= max - 1e-12).unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn universe(tokens: &[&str]) -> FeatureUniverse {
        FeatureUniverse { mutations: tokens.iter().map(|t| MutationId::parse(t).unwrap()).collect(), drugs: vec![] }
    }

    #[test]
    fn coefficient_order() {
        let u = universe(&["PR10I", "PR20R", "PR30N"]);
        let r = coefficient_ranking(&[0.3, -0.5, 0.1], &u).unwrap();
        let order: Vec<_> = r.iter().map(|e| e.0).collect();
        assert_eq!(order, vec![u.mutations[1], u.mutations[0], u.mutations[2]]);
        let zero = coefficient_ranking(&[0.0; 3], &u).unwrap();
        assert_eq!(zero.iter().map(|e| e.0).collect::<Vec<_>>(), u.mutations);
    }

    #[test]
    fn elbow_examples() {
        assert_eq!(elbow_select(&[10.0, 9.0, 1.0, 0.9, 0.8]).unwrap(), 2);
        assert_eq!(elbow_select(&[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(), 0);
        assert_eq!(elbow_select(&[1.0, 1.0, 1.0]).unwrap(), 0);
        assert_eq!(elbow_select(&[1.0, 0.5]), Err(RankingError::TooFew(3)));
    }

    #[test]
    fn clamp_of_zero_weight() {
        assert!((neg_log_weight_sum([0.0]) - 13.815510557964274).abs() < 1e-12);
    }
}

//! Per-mutation weight combining viral load around the genotype, time since
//! the mutation was last seen and its resistance score against the regimen.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use libm::{exp, log10, tanh};

use crate::cohort::{canonical_scale_norm, StanfordScoreTable};
use crate::domain::{Day, DrugId, MutationId, ViralLoad};
use crate::labeling::SUPPRESSION_THRESHOLD;
use crate::persistence::SigmoidParams;

/// Half-width in days of the window integrated around a genotype.
pub const AREA_HALF_WINDOW_DAYS: i32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum WeightError {
    #[error("no viral load before or after the genotype of day {0:?}")]
    MissingViralLoad(Day),
    #[error("weight denominator vanished")]
    DegenerateDenominator,
}

fn log_excess(copies: f64) -> f64 {
    log10(copies) - log10(SUPPRESSION_THRESHOLD)
}

// Piecewise-linear interpolant through (day, log excess), held constant
// beyond the first and last point.
fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Integral of the log10 viral load in excess of 50 copies/ml over the 60
/// days centred on `grt_date`. `vls` must be sorted by date.
pub fn vl_area(vls: &[ViralLoad], grt_date: Day) -> Result<f64, WeightError> {
    let before = vls.iter().any(|v| v.date < grt_date);
    let after = vls.iter().any(|v| v.date > grt_date);
    if !(before && after) {
        return Err(WeightError::MissingViralLoad(grt_date));
    }
    let points: Vec<(f64, f64)> = vls.iter().map(|v| (v.date.0 as f64, log_excess(v.copies_per_ml))).collect();
    Ok(integrate(&points, (grt_date.0 - AREA_HALF_WINDOW_DAYS) as f64, (grt_date.0 + AREA_HALF_WINDOW_DAYS) as f64))
}

/// Exact integral over `[lo, hi]` of the interpolant through `points`
/// (sorted by x, distinct x).
pub fn integrate(points: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let mut knots = Vec::with_capacity(points.len() + 2);
    knots.push(lo);
    knots.extend(points.iter().map(|p| p.0).filter(|&x| x > lo && x < hi));
    knots.push(hi);
    let values: Vec<f64> = knots.iter().map(|&x| interpolate(points, x)).collect();
    knots.windows(2).zip(values.windows(2)).map(|(k, v)| 0.5 * (k[1] - k[0]) * (v[0] + v[1])).sum()
}

/// Per-mutation max-abs scales learned from training occurrences.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AreaScales {
    pub per_mutation: BTreeMap<MutationId, f64>,
    /// Scale for mutations never seen in training.
    pub global: f64,
}

impl AreaScales {
    /// Learns scales from raw training areas. A mutation whose areas are all
    /// zero gets scale 1.
    pub fn fit<'a>(raw: impl IntoIterator<Item = (MutationId, &'a f64)>) -> Self {
        let mut per_mutation: BTreeMap<MutationId, f64> = BTreeMap::new();
        for (m, &a) in raw {
            let e = per_mutation.entry(m).or_insert(0.0);
            *e = e.max(a.abs());
        }
        let global_max = per_mutation.values().copied().fold(0.0, f64::max);
        for v in per_mutation.values_mut() {
            if *v == 0.0 {
                *v = 1.0;
            }
        }
        AreaScales { per_mutation, global: if global_max > 0.0 { global_max } else { 1.0 } }
    }

    pub fn scale(&self, mutation: MutationId) -> f64 {
        self.per_mutation.get(&mutation).copied().unwrap_or(self.global)
    }

    /// Raw area divided by the mutation's scale and clamped to `[-1, 1]`.
    pub fn normalize(&self, mutation: MutationId, raw: f64) -> f64 {
        (raw / self.scale(mutation)).clamp(-1.0, 1.0)
    }
}

/// Normalises each occurrence by its mutation's max-abs training area.
pub fn normalize_areas(raw: &[(MutationId, f64)]) -> (Vec<f64>, AreaScales) {
    let scales = AreaScales::fit(raw.iter().map(|(m, a)| (*m, a)));
    let normalized = raw.iter().map(|&(m, a)| scales.normalize(m, a)).collect();
    (normalized, scales)
}

/// Minimum resistance score of the mutation over the regimen, divided by the
/// norm of the canonical score scale.
///
/// With `same_gene_only`, drugs that do not target the mutation's gene are
/// ignored; a regimen with no such drug scores 0.
pub fn stanford_component(
    mutation: MutationId,
    regimen: &BTreeSet<DrugId>,
    table: &StanfordScoreTable,
    same_gene_only: bool,
) -> f64 {
    let min = regimen
        .iter()
        .filter(|d| !same_gene_only || d.class().target_gene() == mutation.gene)
        .map(|&d| table.score(mutation, d))
        .min()
        .unwrap_or(0);
    min as f64 / canonical_scale_norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutationWeight {
    pub value: f64,
    pub area: f64,
    /// `e^(alpha + beta t)`.
    pub sigmoid_term: f64,
    /// `tanh(S)`.
    pub stanford_term: f64,
    pub t_days: u32,
}

/// Weight of one mutation occurrence, clamped to `[-1, 1]`.
pub fn mutation_weight(params: &SigmoidParams, t_days: u32, area_normalized: f64, s: f64) -> Result<MutationWeight, WeightError> {
    let sigmoid_term = exp(params.alpha + params.beta * t_days as f64);
    let stanford_term = tanh(s);
    let denominator = 1.0 + sigmoid_term - stanford_term;
    if !(denominator > 1e-12) {
        return Err(WeightError::DegenerateDenominator);
    }
    let value = if area_normalized == 0.0 { 0.0 } else { (area_normalized / denominator).clamp(-1.0, 1.0) };
    Ok(MutationWeight { value, area: area_normalized, sigmoid_term, stanford_term, t_days })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persistence::Provenance;

    fn constant_series(copies: f64) -> Vec<ViralLoad> {
        [-100, 100]
            .iter()
            .map(|&d| ViralLoad { patient_id: "p".into(), date: Day(d), copies_per_ml: copies })
            .collect()
    }

    #[test]
    fn constant_areas() {
        assert!(vl_area(&constant_series(50.0), Day(0)).unwrap().abs() < 1e-12);
        assert!((vl_area(&constant_series(500.0), Day(0)).unwrap() - 60.0).abs() < 1e-12);
        let floor = vl_area(&constant_series(20.0), Day(0)).unwrap();
        assert!((floor - 60.0 * libm::log10(20.0 / 50.0)).abs() < 1e-12);
        assert!((floor + 23.876).abs() < 1e-3);
    }

    #[test]
    fn area_needs_both_sides() {
        let vls = constant_series(500.0);
        assert_eq!(vl_area(&vls, Day(100)), Err(WeightError::MissingViralLoad(Day(100))));
    }

    #[test]
    fn normalization_examples() {
        let m = MutationId::parse("RT184V").unwrap();
        let (n, scales) = normalize_areas(&[(m, 10.0), (m, -5.0), (m, 20.0)]);
        assert_eq!(n, vec![0.5, -0.25, 1.0]);
        assert_eq!(scales.normalize(m, 40.0), 1.0);
        let (n, scales) = normalize_areas(&[(m, 0.0), (m, 0.0)]);
        assert_eq!(n, vec![0.0, 0.0]);
        assert_eq!(scales.scale(m), 1.0);
    }

    #[test]
    fn weight_examples() {
        let p = |alpha, beta| SigmoidParams { alpha, beta, provenance: Provenance::Fitted };
        assert_eq!(mutation_weight(&p(0.0, 0.0), 0, 1.0, 0.0).unwrap().value, 0.5);
        assert_eq!(mutation_weight(&p(-10.0, 0.0), 0, 1.0, 60.0 / canonical_scale_norm()).unwrap().value, 1.0);
        let w: Vec<f64> = [0, 100, 1000].iter().map(|&t| mutation_weight(&p(0.0, 0.01), t, 1.0, 0.0).unwrap().value).collect();
        assert!((w[1] - 0.2689414213699951).abs() < 1e-12);
        assert!((w[2] - 4.5397868702434395e-5).abs() < 1e-15);
    }
}

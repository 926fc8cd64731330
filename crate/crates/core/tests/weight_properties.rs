mod support;

use proptest::prelude::*;
use retropredict_core::domain::{Day, ViralLoad};
use retropredict_core::persistence::{Provenance, SigmoidParams};
use retropredict_core::weighting::{integrate, mutation_weight, vl_area, WeightError};

#[test]
fn weight_is_clamped_on_a_million_draws() {
    support::check_weight_clamp(1_000_000, 31).unwrap();
}

#[test]
fn weight_is_monotone() {
    support::check_weight_monotonicity(100_000, 32).unwrap();
}

#[test]
fn area_is_stable_under_refinement() {
    support::check_area_refinement(2000, 33).unwrap();
}

#[test]
fn area_of_a_ramp() {
    let vls = [(-30, 50.0), (30, 5000.0)].map(|(d, c)| ViralLoad { patient_id: "p".into(), date: Day(d), copies_per_ml: c });
    // linear from 0 to 2 log units over 60 days
    assert!((vl_area(&vls, Day(0)).unwrap() - 60.0).abs() < 1e-12);
    assert_eq!(integrate(&[(0.0, 1.0)], -5.0, 5.0), 10.0);
}

#[test]
fn degenerate_denominator_is_an_error() {
    let p = SigmoidParams { alpha: -800.0, beta: 0.0, provenance: Provenance::Hyperparameter };
    assert_eq!(mutation_weight(&p, 0, 0.5, 40.0).unwrap_err(), WeightError::DegenerateDenominator);
}

proptest! {
    #[test]
    fn weight_sign_follows_area(
        alpha in -20.0f64..20.0, beta in 0.0f64..1.0, t in 0u32..4000,
        area in -1.0f64..1.0, score in -15i32..=60
    ) {
        let p = SigmoidParams { alpha, beta, provenance: Provenance::Fitted };
        let s = score as f64 / 16600f64.sqrt();
        let w = mutation_weight(&p, t, area, s).unwrap().value;
        prop_assert!(w.abs() <= 1.0);
        prop_assert!(w == 0.0 || w.signum() == area.signum());
    }

    #[test]
    fn area_is_additive_over_split_windows(
        pts in prop::collection::btree_map(-60i32..60, 1.0f64..6.0, 2..12),
        cut in -29.0f64..29.0
    ) {
        let points: Vec<(f64, f64)> = pts.iter().map(|(&d, &v)| (d as f64, v)).collect();
        let whole = integrate(&points, -30.0, 30.0);
        let parts = integrate(&points, -30.0, cut) + integrate(&points, cut, 30.0);
        prop_assert!((whole - parts).abs() < 1e-9);
    }
}

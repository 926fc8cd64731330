mod support;

use proptest::prelude::*;
use retropredict_core::features::SparseVector;
use retropredict_core::learner::platt::platt_calibrate;
use retropredict_core::learner::svm::{train_svm, train_svm_warm, SvmOptions};
use retropredict_core::persistence::{fit_presence, sigmoid::fit_sigmoid_nll, Interval};

#[test]
fn sigmoid_fit_beats_grid() {
    support::check_sigmoid(200, 21).unwrap();
}

#[test]
fn svm_matches_qp_oracle() {
    support::check_svm().unwrap();
}

#[test]
fn platt_fit_beats_grid() {
    support::check_platt(200, 22).unwrap();
}

#[test]
fn persistence_worked_example() {
    let x = [20.0, 50.0, 250.0, 347.0, 500.0, 1000.0];
    let t = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
    let fit = fit_presence(&x, &t).unwrap();
    let f = |v: f64| 1.0 / (1.0 + (fit.intercept + fit.slope * v).exp());
    assert!(f(250.0) > 0.5 && f(347.0) < 0.5);
    assert!(fit.slope > 0.0);
}

#[test]
fn two_point_svm_is_max_margin() {
    let rows = [SparseVector::from_entries(vec![(0, 1.0)]), SparseVector::from_entries(vec![(0, -1.0)])];
    let refs: Vec<&SparseVector> = rows.iter().collect();
    let opts = SvmOptions { bias: 0.0, ..SvmOptions::default() };
    let sol = train_svm(&refs, &[true, false], 1, 10.0, &opts).unwrap();
    assert!((sol.w[0] - 1.0).abs() < 1e-6);
    assert!(sol.converged);
}

#[test]
fn warm_start_reaches_the_same_solution() {
    let (rows, labels, _) = support::toy_rows(40, 6, 5);
    let refs: Vec<&SparseVector> = rows.iter().collect();
    let opts = SvmOptions::default();
    let cold = train_svm(&refs, &labels, 6, 0.5, &opts).unwrap();
    let start = train_svm(&refs, &labels, 6, 0.05, &opts).unwrap();
    let warm = train_svm_warm(&refs, &labels, 6, 0.5, &opts, Some(&start.alpha)).unwrap();
    for (a, b) in cold.w.iter().zip(&warm.w) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn svm_dual_trace_is_non_decreasing() {
    let (rows, labels, _) = support::toy_rows(50, 6, 9);
    let refs: Vec<&SparseVector> = rows.iter().collect();
    let sol = train_svm(&refs, &labels, 6, 1.0, &SvmOptions::default()).unwrap();
    for w in sol.dual_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9);
    }
}

#[test]
fn platt_reports_orientation() {
    let d = [-2.0, -1.0, 1.0, 2.0];
    let ok = platt_calibrate(&d, &[false, false, true, true]).unwrap();
    assert!(!ok.orientation_flipped && ok.a < 0.0);
    let flipped = platt_calibrate(&d, &[true, true, false, false]).unwrap();
    assert!(flipped.orientation_flipped && flipped.a == 0.0);
}

proptest! {
    #[test]
    fn sigmoid_solution_is_a_box_kkt_point(
        xs in prop::collection::vec(0u32..1500, 3..30),
        ys in prop::collection::vec(any::<bool>(), 30)
    ) {
        let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
        let t: Vec<f64> = ys[..x.len()].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        prop_assume!(t.contains(&1.0) && t.contains(&0.0));
        let box_a = Interval::new(-20.0, 20.0);
        let box_b = Interval::new(0.0, 1.0);
        let fit = fit_sigmoid_nll(&x, &t, box_a, box_b);
        let nll = |a: f64, b: f64| retropredict_core::persistence::sigmoid_nll(&x, &t, a, b);
        // no feasible nearby move improves the objective
        for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-6), (0.0, -1e-6)] {
            let a = box_a.clamp(fit.intercept + da);
            let b = box_b.clamp(fit.slope + db);
            prop_assert!(nll(a, b) >= fit.nll - 1e-9);
        }
    }
}

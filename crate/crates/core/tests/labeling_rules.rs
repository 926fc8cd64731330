mod support;

use proptest::prelude::*;
use retropredict_core::domain::{Day, DrugId, Therapy, ViralLoad};
use retropredict_core::labeling::{label_therapy, LabelValue};

#[test]
fn rule_table() {
    support::check_label_table().unwrap();
}

fn series(points: &[(i32, f64)]) -> Vec<ViralLoad> {
    points.iter().map(|&(d, c)| ViralLoad { patient_id: "p".into(), date: Day(d), copies_per_ml: c }).collect()
}

proptest! {
    #[test]
    fn lowering_the_deciding_load_never_hurts(
        end in prop::option::of(0i32..400),
        days in prop::collection::btree_set(-100i32..250, 1..8),
        logs in prop::collection::vec(1.3f64..6.0, 8),
        factor in 0.0f64..1.0
    ) {
        let therapy = Therapy::new("p", "t", Day(0), end.map(Day), [DrugId::Lamivudine]).unwrap();
        let pts: Vec<(i32, f64)> = days.iter().zip(&logs).map(|(&d, &l)| (d, 10f64.powf(l))).collect();
        let before = label_therapy(&therapy, &series(&pts));
        prop_assume!(before.deciding_vl.is_some());
        let deciding = before.deciding_vl.unwrap().0;
        let lowered: Vec<(i32, f64)> = pts
            .iter()
            .map(|&(d, c)| if Day(d) == deciding { (d, (c * factor).max(20.0)) } else { (d, c) })
            .collect();
        let after = label_therapy(&therapy, &series(&lowered));
        prop_assert!(!(before.value == LabelValue::Success && after.value == LabelValue::Failure));
    }

    #[test]
    fn every_therapy_gets_one_consistent_label(
        end in prop::option::of(0i32..400),
        days in prop::collection::btree_set(-100i32..250, 0..8),
        logs in prop::collection::vec(1.3f64..6.0, 8)
    ) {
        let therapy = Therapy::new("p", "t", Day(0), end.map(Day), [DrugId::Lamivudine]).unwrap();
        let pts: Vec<(i32, f64)> = days.iter().zip(&logs).map(|(&d, &l)| (d, 10f64.powf(l))).collect();
        let l = label_therapy(&therapy, &series(&pts));
        prop_assert_eq!(l.value == LabelValue::Excluded, l.reason.is_some());
        prop_assert_eq!(l.value == LabelValue::Excluded, l.deciding_vl.is_none());
    }
}

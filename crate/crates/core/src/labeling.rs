//! Outcome labelling of a therapy from its viral load trajectory.

use crate::domain::{Day, Outcome, Therapy, ViralLoad};
use libm::log10;

/// Suppression threshold in copies/ml.
pub const SUPPRESSION_THRESHOLD: f64 = 50.0;

pub const WEEK: i32 = 7;
/// Days before the start within which a viral load counts as baseline.
pub const BASELINE_LOOKBACK_DAYS: i32 = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelValue {
    Success,
    Failure,
    Excluded,
}

impl LabelValue {
    pub fn outcome(self) -> Option<Outcome> {
        match self {
            LabelValue::Success => Some(Outcome::Success),
            LabelValue::Failure => Some(Outcome::Failure),
            LabelValue::Excluded => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelValue::Success => "success",
            LabelValue::Failure => "failure",
            LabelValue::Excluded => "excluded",
        }
    }
}

/// Duration bucket that decided the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Ran at least 20 weeks (or is open-ended): follow-up between weeks 20 and 28.
    Window20to28,
    /// Stopped after more than 4 and at most 8 weeks.
    Stop4to8,
    /// Stopped after more than 8 and less than 20 weeks.
    Stop8to20,
    /// Stopped within 4 weeks.
    StopUnder4,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Window20to28 => "Window20to28",
            Rule::Stop4to8 => "Stop4to8",
            Rule::Stop8to20 => "Stop8to20",
            Rule::StopUnder4 => "StopUnder4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionReason {
    /// Stopped within 4 weeks, most likely for toxicity.
    ShortTherapy,
    /// No viral load between weeks 20 and 28.
    NoFollowUpViralLoad,
    /// A stopped therapy without any viral load while it ran.
    NoOnTherapyViralLoad,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::ShortTherapy => "ShortTherapy",
            ExclusionReason::NoFollowUpViralLoad => "NoFollowUpVL",
            ExclusionReason::NoOnTherapyViralLoad => "NoOnTherapyVL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeLabel {
    pub value: LabelValue,
    /// `None` when no rule had the data it needs.
    pub rule_fired: Option<Rule>,
    pub deciding_vl: Option<(Day, f64)>,
    pub baseline_vl: Option<(Day, f64)>,
    pub reason: Option<ExclusionReason>,
}

impl OutcomeLabel {
    fn excluded(rule: Option<Rule>, reason: ExclusionReason, baseline_vl: Option<(Day, f64)>) -> Self {
        OutcomeLabel { value: LabelValue::Excluded, rule_fired: rule, deciding_vl: None, baseline_vl, reason: Some(reason) }
    }

    pub fn exclusion(&self) -> Option<ExclusionReason> {
        self.reason
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.value.outcome()
    }
}

/// Most recent viral load within the 90 days up to and including the start.
pub fn baseline_viral_load(start: Day, vls: &[ViralLoad]) -> Option<&ViralLoad> {
    let lo = start.plus(-BASELINE_LOOKBACK_DAYS);
    vls.iter().filter(|v| v.date >= lo && v.date <= start).max_by_key(|v| v.date)
}

/// Applies the outcome rules to one therapy. `vls` must be sorted by date.
pub fn label_therapy(therapy: &Therapy, vls: &[ViralLoad]) -> OutcomeLabel {
    let start = therapy.start;
    let baseline = baseline_viral_load(start, vls).map(|v| (v.date, v.copies_per_ml));

    let duration = therapy.duration_days();
    let rule = match duration {
        None => Rule::Window20to28,
        Some(d) if d >= 20 * WEEK => Rule::Window20to28,
        Some(d) if d <= 4 * WEEK => Rule::StopUnder4,
        Some(d) if d <= 8 * WEEK => Rule::Stop4to8,
        Some(_) => Rule::Stop8to20,
    };

    match rule {
        Rule::StopUnder4 => OutcomeLabel::excluded(Some(rule), ExclusionReason::ShortTherapy, baseline),
        Rule::Window20to28 => {
            let lo = start.plus(20 * WEEK);
            let hi = start.plus(28 * WEEK);
            let target = start.plus(24 * WEEK);
            // the earliest of equally close candidates wins because min_by_key keeps the first
            let chosen = vls
                .iter()
                .filter(|v| v.date >= lo && v.date <= hi)
                .min_by_key(|v| v.date.days_since(target).unsigned_abs());
            match chosen {
                None => OutcomeLabel::excluded(None, ExclusionReason::NoFollowUpViralLoad, baseline),
                Some(v) => OutcomeLabel {
                    value: if v.copies_per_ml < SUPPRESSION_THRESHOLD { LabelValue::Success } else { LabelValue::Failure },
                    rule_fired: Some(rule),
                    deciding_vl: Some((v.date, v.copies_per_ml)),
                    baseline_vl: baseline,
                    reason: None,
                },
            }
        }
        Rule::Stop4to8 | Rule::Stop8to20 => {
            let end = therapy.end.expect("stop rules need an end date");
            let last = vls.iter().filter(|v| v.date >= start && v.date <= end).max_by_key(|v| v.date);
            let Some(last) = last else {
                return OutcomeLabel::excluded(None, ExclusionReason::NoOnTherapyViralLoad, baseline);
            };
            let required_drop = if rule == Rule::Stop4to8 { 1.0 } else { 2.0 };
            let dropped = baseline.is_some_and(|(_, b)| log10(b / last.copies_per_ml) >= required_drop);
            let success = last.copies_per_ml < SUPPRESSION_THRESHOLD || dropped;
            OutcomeLabel {
                value: if success { LabelValue::Success } else { LabelValue::Failure },
                rule_fired: Some(rule),
                deciding_vl: Some((last.date, last.copies_per_ml)),
                baseline_vl: baseline,
                reason: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DrugId;
    use alloc::vec::Vec;

    fn therapy(duration_days: Option<i32>) -> Therapy {
        Therapy::new("p", "t", Day(0), duration_days.map(Day), [DrugId::Efavirenz]).unwrap()
    }

    fn series(points: &[(i32, f64)]) -> Vec<ViralLoad> {
        points.iter().map(|&(d, c)| ViralLoad { patient_id: "p".into(), date: Day(d), copies_per_ml: c }).collect()
    }

    #[test]
    fn closest_to_week_24_wins() {
        let l = label_therapy(&therapy(Some(52 * 7)), &series(&[(21 * 7, 90.0), (25 * 7, 40.0)]));
        assert_eq!(l.value, LabelValue::Success);
        assert_eq!(l.deciding_vl, Some((Day(175), 40.0)));
    }

    #[test]
    fn short_stop_excluded() {
        let l = label_therapy(&therapy(Some(21)), &series(&[(10, 20.0)]));
        assert_eq!(l.value, LabelValue::Excluded);
        assert_eq!(l.rule_fired, Some(Rule::StopUnder4));
    }

    #[test]
    fn log_drop_rules() {
        let vls = series(&[(-10, 100_000.0), (30, 5_000.0)]);
        assert_eq!(label_therapy(&therapy(Some(42)), &vls).value, LabelValue::Success);
        let vls = series(&[(-10, 100_000.0), (70, 5_000.0)]);
        assert_eq!(label_therapy(&therapy(Some(84)), &vls).value, LabelValue::Failure);
    }
}

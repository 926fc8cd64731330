//! Reference implementations and randomized checks shared by the
//! integration tests and the acceptance runner.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retropredict_core::cohort::canonical_scale_norm;
use retropredict_core::domain::{Day, DrugId, Therapy, ViralLoad};
use retropredict_core::features::{split_by_patient, SparseVector};
use retropredict_core::labeling::{label_therapy, ExclusionReason, LabelValue, Rule};
use retropredict_core::learner::platt::{platt_calibrate, platt_targets};
use retropredict_core::learner::svm::{dual_objective, primal_objective, train_svm, SvmOptions};
use retropredict_core::learner::{random_search_cv, CvConfig};
use retropredict_core::persistence::{fit_presence, Provenance, SigmoidParams, ALPHA_BOUNDS, BETA_BOUNDS};
use retropredict_core::stats::auc::doubled_u;
use retropredict_core::stats::{
    balanced_accuracy, benjamini_hochberg, roc_auc, tune_threshold, wilcoxon_signed_rank, Alternative,
};
use retropredict_core::weighting::{mutation_weight, vl_area};

pub type Check = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn both_classes(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<bool> {
    loop {
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
            return y;
        }
    }
}

// ---------------------------------------------------------------- AUC

/// Doubled Mann-Whitney count by direct comparison of every pair.
pub fn pairwise_doubled_u(scores: &[f64], positives: &[bool]) -> u128 {
    let mut total = 0u128;
    for (i, &pi) in positives.iter().enumerate() {
        if !pi {
            continue;
        }
        for (j, &pj) in positives.iter().enumerate() {
            if pj {
                continue;
            }
            if scores[i] > scores[j] {
                total += 2;
            } else if scores[i] == scores[j] {
                total += 1;
            }
        }
    }
    total
}

pub fn check_auc(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for k in 0..instances {
        let n = r.random_range(2..=200);
        // coarse scores force plenty of ties
        let levels = if k % 2 == 0 { r.random_range(2..8) } else { 1_000_000 };
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let rate = r.random_range(0.05..0.95);
        let pos = both_classes(&mut r, n, rate);
        let oracle = pairwise_doubled_u(&scores, &pos);
        if doubled_u(&scores, &pos) != oracle {
            return Err(format!("instance {k}: doubled U differs from pair count"));
        }
        let p = pos.iter().filter(|&&v| v).count() as f64;
        let expected = oracle as f64 / (2.0 * p * (n as f64 - p));
        let got = roc_auc(&scores, &pos).map_err(|e| e.to_string())?;
        if got != expected {
            return Err(format!("instance {k}: auc {got} vs {expected}"));
        }
    }
    Ok(format!("{instances} instances identical"))
}

// ----------------------------------------------------------- Wilcoxon

/// Exact tails of the signed-rank statistic by listing every sign vector.
/// Ranks are mid-ranks of |d| with zeros included, zeros then dropped.
pub fn enumerated_wilcoxon(diffs: &[f64]) -> Option<(f64, f64, f64)> {
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let rank = |i: usize| {
        let below = abs.iter().filter(|&&a| a < abs[i]).count() as f64;
        let equal = abs.iter().filter(|&&a| a == abs[i]).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let kept: Vec<(f64, bool)> = (0..diffs.len()).filter(|&i| diffs[i] != 0.0).map(|i| (rank(i), diffs[i] > 0.0)).collect();
    if kept.is_empty() {
        return None;
    }
    let observed: f64 = kept.iter().filter(|k| k.1).map(|k| k.0).sum();
    let n = kept.len();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|&b| mask >> b & 1 == 1).map(|b| kept[b].0).sum();
        if w >= observed - 1e-9 {
            ge += 1;
        }
        if w <= observed + 1e-9 {
            le += 1;
        }
    }
    let total = (1u64 << n) as f64;
    let upper = ge as f64 / total;
    let lower = le as f64 / total;
    Some((upper, lower, (2.0 * upper.min(lower)).min(1.0)))
}

pub fn check_wilcoxon(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut compared = 0;
    for k in 0..instances {
        let n = r.random_range(1..=12);
        let levels = r.random_range(2..10);
        let diffs: Vec<f64> = (0..n)
            .map(|_| {
                let v = r.random_range(-levels..=levels) as f64;
                if k % 3 == 0 { v + r.random::<f64>() * 0.5 } else { v }
            })
            .collect();
        let Some((upper, lower, two)) = enumerated_wilcoxon(&diffs) else { continue };
        let cases = [(Alternative::Greater, upper), (Alternative::Less, lower), (Alternative::TwoSided, two)];
        for (alt, expected) in cases {
            let got = wilcoxon_signed_rank(&diffs, alt).map_err(|e| e.to_string())?;
            if !got.exact || (got.p_value - expected).abs() > 1e-12 {
                return Err(format!("instance {k} {alt:?}: p {} vs enumerated {expected} for {diffs:?}", got.p_value));
            }
        }
        compared += 1;
    }
    Ok(format!("{compared} instances match enumeration"))
}

// ------------------------------------------------------------------ BH

/// Step-up rule evaluated directly from its definition.
pub fn direct_step_up(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut threshold = None;
    for k in (1..=m).rev() {
        if sorted[k - 1] <= k as f64 * alpha / m as f64 {
            threshold = Some(sorted[k - 1]);
            break;
        }
    }
    p.iter().map(|&v| threshold.is_some_and(|t| v <= t)).collect()
}

pub fn check_bh(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for k in 0..instances {
        let m = r.random_range(1..=60);
        let alpha = [0.01, 0.05, 0.1, 0.25][k % 4];
        let p: Vec<f64> = (0..m)
            .map(|_| {
                let v: f64 = r.random::<f64>().powi(r.random_range(1..4));
                if k % 2 == 0 { (v * 200.0).round() / 200.0 } else { v }
            })
            .collect();
        if benjamini_hochberg(&p, alpha) != direct_step_up(&p, alpha) {
            return Err(format!("instance {k}: rejection sets differ for {p:?}"));
        }
    }
    Ok(format!("{instances} p-vectors identical"))
}

// ------------------------------------------------------------ sigmoid

fn presence_nll(x: &[f64], t: &[f64], alpha: f64, beta: f64) -> f64 {
    let mut total = 0.0;
    for (&xi, &ti) in x.iter().zip(t) {
        let z = alpha + beta * xi;
        // -log f = log(1 + e^z), -log(1 - f) = log(1 + e^-z)
        let present = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        let absent = present - z;
        total += ti * present + (1.0 - ti) * absent;
    }
    total / x.len() as f64
}

pub fn check_sigmoid(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 0..instances {
        let n = r.random_range(4..=60);
        let alpha = r.random_range(-8.0..4.0);
        let beta = if k % 4 == 0 { r.random_range(0.0..0.5) } else { r.random_range(0.0..0.05) };
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0..2000) as f64).collect();
        let y: Vec<bool> = loop {
            let y: Vec<bool> = x.iter().map(|&xi| r.random_bool(1.0 / (1.0 + f64::exp(alpha + beta * xi)))).collect();
            if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
                break y;
            }
            if r.random_bool(0.5) {
                let i = r.random_range(0..n);
                let mut y = y;
                y[i] = !y[i];
                if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
                    break y;
                }
            }
        };
        let t: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        let fit = fit_presence(&x, &t).map_err(|e| e.to_string())?;
        if !ALPHA_BOUNDS.contains(fit.intercept) || !BETA_BOUNDS.contains(fit.slope) {
            return Err(format!("instance {k}: solution ({}, {}) leaves the box", fit.intercept, fit.slope));
        }
        let fitted = presence_nll(&x, &t, fit.intercept, fit.slope);
        let mut grid = f64::INFINITY;
        for i in 0..=100 {
            let a = ALPHA_BOUNDS.lo + (ALPHA_BOUNDS.hi - ALPHA_BOUNDS.lo) * i as f64 / 100.0;
            for j in 0..=100 {
                let b = BETA_BOUNDS.lo + (BETA_BOUNDS.hi - BETA_BOUNDS.lo) * j as f64 / 100.0;
                grid = grid.min(presence_nll(&x, &t, a, b));
            }
        }
        worst = worst.max(fitted - grid);
        if fitted > grid + 1e-6 {
            return Err(format!("instance {k}: nll {fitted} exceeds grid {grid}"));
        }
    }
    Ok(format!("{instances} sets, max excess over grid {worst:.3e}"))
}

// ---------------------------------------------------------------- SVM

/// Fixed labelled points whose subsets make up the SVM test family.
pub const SVM_POOL: [([f64; 2], bool); 6] = [
    ([2.0, 1.0], true),
    ([1.0, 2.0], true),
    ([0.5, 0.4], false),
    ([-1.0, 0.0], false),
    ([0.3, 0.9], true),
    ([1.2, 0.2], false),
];

/// Spans the range searched during model selection, `ln C` in `[-14, 0]`.
pub const SVM_COSTS: [f64; 5] = [1e-6, 1e-4, 0.01, 0.1, 1.0];

/// Maximises the bias-augmented dual by projected gradient ascent.
pub fn projected_gradient_dual(x: &[[f64; 2]], y: &[f64], c: f64, bias: f64) -> Vec<f64> {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * (x[i][0] * x[j][0] + x[i][1] * x[j][1] + bias * bias)).collect())
        .collect();
    let lipschitz: f64 = (0..n).map(|i| q[i].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    for _ in 0..400_000 {
        let mut worst: f64 = 0.0;
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>()).collect();
        for i in 0..n {
            let next = (a[i] + step * grad[i]).clamp(0.0, c);
            worst = worst.max((next - a[i]).abs());
            a[i] = next;
        }
        if worst < 1e-15 {
            break;
        }
    }
    a
}

fn dual_value(x: &[[f64; 2]], y: &[f64], a: &[f64], bias: f64) -> f64 {
    let mut w = [0.0; 3];
    for i in 0..x.len() {
        w[0] += a[i] * y[i] * x[i][0];
        w[1] += a[i] * y[i] * x[i][1];
        w[2] += a[i] * y[i] * bias;
    }
    a.iter().sum::<f64>() - 0.5 * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
}

pub fn check_svm() -> Check {
    let opts = SvmOptions::default();
    let mut instances = 0;
    let (mut max_gap, mut max_kkt, mut max_oracle): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for mask in 1u32..(1 << SVM_POOL.len()) {
        let members: Vec<usize> = (0..SVM_POOL.len()).filter(|&i| mask >> i & 1 == 1).collect();
        let pos: Vec<bool> = members.iter().map(|&i| SVM_POOL[i].1).collect();
        if pos.iter().all(|&p| p) || pos.iter().all(|&p| !p) {
            continue;
        }
        let pts: Vec<[f64; 2]> = members.iter().map(|&i| SVM_POOL[i].0).collect();
        let rows: Vec<SparseVector> = pts.iter().map(|p| SparseVector::from_entries(vec![(0, p[0]), (1, p[1])])).collect();
        let refs: Vec<&SparseVector> = rows.iter().collect();
        let ys: Vec<f64> = pos.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
        for &c in &SVM_COSTS {
            let sol = train_svm(&refs, &pos, 2, c, &opts).map_err(|e| e.to_string())?;
            let dual = dual_objective(&refs, &pos, &sol.alpha, 2, opts.bias);
            let primal = primal_objective(&refs, &pos, &sol.w, sol.b, c, opts.bias);
            let gap = primal - dual;
            let mut kkt: f64 = 0.0;
            for (i, x) in rows.iter().enumerate() {
                let g = ys[i] * sol.decision(x) - 1.0;
                let a = sol.alpha[i];
                let pg = if a <= 0.0 { g.min(0.0) } else if a >= c { g.max(0.0) } else { g };
                kkt = kkt.max(pg.abs());
            }
            let oracle = dual_value(&pts, &ys, &projected_gradient_dual(&pts, &ys, c, opts.bias), opts.bias);
            let oracle_diff = oracle - dual;
            max_gap = max_gap.max(gap.abs());
            max_kkt = max_kkt.max(kkt);
            max_oracle = max_oracle.max(oracle_diff);
            if gap.abs() >= 1e-5 || kkt >= 1e-4 || oracle_diff >= 1e-5 {
                return Err(format!(
                    "subset {members:?}, C={c}: gap {gap:.3e}, kkt {kkt:.3e}, oracle dual above ours by {oracle_diff:.3e}"
                ));
            }
            instances += 1;
        }
    }
    Ok(format!("{instances} instances, max gap {max_gap:.2e}, max KKT {max_kkt:.2e}, max oracle excess {max_oracle:.2e}"))
}

// -------------------------------------------------------------- Platt

fn platt_nll(d: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for (&di, &ti) in d.iter().zip(t) {
        let p = 1.0 / (1.0 + (a * di + b).exp());
        let p = p.clamp(1e-300, 1.0 - 1e-16);
        total -= ti * p.ln() + (1.0 - ti) * (1.0 - p).ln();
    }
    total / d.len() as f64
}

pub fn check_platt(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 0..instances {
        let n = r.random_range(6..=50);
        let d: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let slope: f64 = r.random_range(-4.0..2.0);
        let y: Vec<bool> = loop {
            let y: Vec<bool> = d.iter().map(|&v| r.random_bool(1.0 / (1.0 + (-slope * v).exp()))).collect();
            if y.iter().any(|&v| v) && y.iter().any(|&v| !v) {
                break y;
            }
        };
        let p = platt_calibrate(&d, &y).map_err(|e| e.to_string())?;
        if p.a > 0.0 {
            return Err(format!("instance {k}: slope {} is positive", p.a));
        }
        let t = platt_targets(&y);
        let fitted = platt_nll(&d, &t, p.a, p.b);
        let mut grid = f64::INFINITY;
        for i in 0..=200 {
            let a = -10.0 + 10.0 * i as f64 / 200.0;
            for j in 0..=200 {
                let b = -10.0 + 20.0 * j as f64 / 200.0;
                grid = grid.min(platt_nll(&d, &t, a, b));
            }
        }
        worst = worst.max(fitted - grid);
        if fitted > grid + 1e-4 {
            return Err(format!("instance {k}: nll {fitted} exceeds grid {grid}"));
        }
    }
    Ok(format!("{instances} sets, max excess over grid {worst:.3e}"))
}

// ------------------------------------------------------ weight formula

pub fn check_weight_clamp(draws: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let norm = canonical_scale_norm();
    for k in 0..draws {
        let params = SigmoidParams {
            alpha: r.random_range(-20.0..=20.0),
            beta: r.random_range(0.0..=1.0),
            provenance: Provenance::Fitted,
        };
        let t = r.random_range(0..=5000u32);
        let area = r.random_range(-1.0..=1.0);
        let s = r.random_range(-15..=60) as f64 / norm;
        let w = mutation_weight(&params, t, area, s).map_err(|e| format!("draw {k}: {e}"))?;
        if !(w.value.abs() <= 1.0) {
            return Err(format!("draw {k}: |w| = {} for {params:?}, t={t}, area={area}, s={s}", w.value.abs()));
        }
    }
    Ok(format!("{draws} draws within [-1, 1]"))
}

pub fn check_weight_monotonicity(draws: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let norm = canonical_scale_norm();
    for k in 0..draws {
        let params = SigmoidParams {
            alpha: r.random_range(-20.0..=20.0),
            beta: r.random_range(1e-6..=1.0),
            provenance: Provenance::Fitted,
        };
        let area = r.random_range(-1.0..=1.0);
        let s = r.random_range(-15..=60) as f64 / norm;
        let t1 = r.random_range(0..=3000u32);
        let t2 = t1 + r.random_range(1..=3000u32);
        let w1 = mutation_weight(&params, t1, area, s).map_err(|e| e.to_string())?.value;
        let w2 = mutation_weight(&params, t2, area, s).map_err(|e| e.to_string())?.value;
        if w2.abs() > w1.abs() || w1 * w2 < 0.0 {
            return Err(format!("draw {k}: |w| grew with t ({t1}: {w1}, {t2}: {w2})"));
        }
        let s2 = s + r.random_range(1..=20) as f64 * 5.0 / norm;
        let t = r.random_range(0..=3000u32);
        let lo = mutation_weight(&params, t, area, s).map_err(|e| e.to_string())?.value;
        let hi = mutation_weight(&params, t, area, s2).map_err(|e| e.to_string())?.value;
        if hi.abs() < lo.abs() || hi * lo < 0.0 {
            return Err(format!("draw {k}: |w| shrank as S grew ({s}: {lo}, {s2}: {hi})"));
        }
        let zero = mutation_weight(&params, t, 0.0, s).map_err(|e| e.to_string())?.value;
        if zero != 0.0 {
            return Err(format!("draw {k}: zero area gave {zero}"));
        }
    }
    Ok(format!("{draws} draws monotone in t and S, zero area gives zero"))
}

fn vl(day: i32, copies: f64) -> ViralLoad {
    ViralLoad { patient_id: "p".into(), date: Day(day), copies_per_ml: copies }
}

pub fn check_area_refinement(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let mut days: Vec<i32> = (-15..=15).map(|i| i * 8).filter(|&d| d != 0 && r.random_bool(0.4)).collect();
        if !days.iter().any(|&d| d < 0) {
            days.insert(0, -8 * r.random_range(1..=15));
        }
        if !days.iter().any(|&d| d > 0) {
            days.push(8 * r.random_range(1..=15));
        }
        days.sort();
        let coarse: Vec<ViralLoad> = days.iter().map(|&d| vl(d, 10f64.powf(r.random_range(1.3..6.5)))).collect();
        let mut fine = Vec::with_capacity(coarse.len() * 2);
        for pair in coarse.windows(2) {
            fine.push(pair[0].clone());
            let mid = (pair[0].date.0 + pair[1].date.0) / 2;
            fine.push(vl(mid, (pair[0].copies_per_ml * pair[1].copies_per_ml).sqrt()));
        }
        fine.push(coarse.last().unwrap().clone());
        let a = vl_area(&coarse, Day(0)).map_err(|e| e.to_string())?;
        let b = vl_area(&fine, Day(0)).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
        if (a - b).abs() >= 1e-9 {
            return Err(format!("instance {k}: area {a} drifts to {b}"));
        }
    }
    Ok(format!("{instances} series, max drift {worst:.2e}"))
}

// ------------------------------------------------------------ labeling

pub struct LabelCase {
    pub name: &'static str,
    pub end: Option<i32>,
    pub vls: &'static [(i32, f64)],
    pub value: LabelValue,
    pub rule: Option<Rule>,
    pub deciding_day: Option<i32>,
    pub reason: Option<ExclusionReason>,
}

const fn case(
    name: &'static str,
    end: Option<i32>,
    vls: &'static [(i32, f64)],
    value: LabelValue,
    rule: Option<Rule>,
    deciding_day: Option<i32>,
    reason: Option<ExclusionReason>,
) -> LabelCase {
    LabelCase { name, end, vls, value, rule, deciding_day, reason }
}

use ExclusionReason::{NoFollowUpViralLoad as NoFollowUp, NoOnTherapyViralLoad as NoOnTherapy, ShortTherapy};
use LabelValue::{Excluded, Failure, Success};
use Rule::{Stop4to8, Stop8to20, StopUnder4, Window20to28 as Window};

/// Therapies start on day 0; `end` is the stop day.
pub const LABEL_CASES: [LabelCase; 40] = [
    case("open ended, suppressed at week 24", None, &[(168, 30.0)], Success, Some(Window), Some(168), None),
    case("open ended, detectable at week 24", None, &[(168, 80.0)], Failure, Some(Window), Some(168), None),
    case("week 25 beats week 21", Some(364), &[(147, 90.0), (175, 40.0)], Success, Some(Window), Some(175), None),
    case("window opens at week 20", Some(364), &[(140, 30.0)], Success, Some(Window), Some(140), None),
    case("window closes at week 28", Some(364), &[(196, 30.0)], Success, Some(Window), Some(196), None),
    case("day before the window", Some(364), &[(139, 30.0)], Excluded, None, None, Some(NoFollowUp)),
    case("day after the window", Some(364), &[(197, 30.0)], Excluded, None, None, Some(NoFollowUp)),
    case("tie resolved to earlier success", Some(364), &[(161, 30.0), (175, 80.0)], Success, Some(Window), Some(161), None),
    case("tie resolved to earlier failure", Some(364), &[(161, 80.0), (175, 30.0)], Failure, Some(Window), Some(161), None),
    case("stop at exactly 20 weeks, success", Some(140), &[(168, 30.0)], Success, Some(Window), Some(168), None),
    case("stop at exactly 20 weeks, failure", Some(140), &[(168, 60.0)], Failure, Some(Window), Some(168), None),
    case("open ended without any load", None, &[], Excluded, None, None, Some(NoFollowUp)),
    case("exactly 50 copies is not suppressed", Some(364), &[(168, 50.0)], Failure, Some(Window), Some(168), None),
    case("just under 50 copies", Some(364), &[(168, 49.9)], Success, Some(Window), Some(168), None),
    case("closest load decides among three", Some(364), &[(150, 1e5), (168, 30.0), (190, 1e5)], Success, Some(Window), Some(168), None),
    case("loads only outside the window", Some(364), &[(100, 30.0), (250, 30.0)], Excluded, None, None, Some(NoFollowUp)),
    case("baseline alone does not label", Some(364), &[(-10, 1e5), (100, 20.0)], Excluded, None, None, Some(NoFollowUp)),
    case("nearer later load decides", None, &[(160, 40.0), (170, 100.0)], Failure, Some(Window), Some(170), None),
    case("three weeks", Some(21), &[(10, 20.0)], Excluded, Some(StopUnder4), None, Some(ShortTherapy)),
    case("exactly four weeks", Some(28), &[(-5, 1e5), (20, 20.0)], Excluded, Some(StopUnder4), None, Some(ShortTherapy)),
    case("stopped on the start day", Some(0), &[(0, 20.0)], Excluded, Some(StopUnder4), None, Some(ShortTherapy)),
    case("four weeks without loads", Some(28), &[], Excluded, Some(StopUnder4), None, Some(ShortTherapy)),
    case("one day past four weeks", Some(29), &[(-10, 1e5), (20, 5000.0)], Success, Some(Stop4to8), Some(20), None),
    case("six weeks, 1.3 log drop", Some(42), &[(-10, 1e5), (30, 5000.0)], Success, Some(Stop4to8), Some(30), None),
    case("exactly eight weeks, small drop", Some(56), &[(-10, 1e5), (50, 20000.0)], Failure, Some(Stop4to8), Some(50), None),
    case("exactly one log drop", Some(42), &[(-10, 1e4), (30, 1000.0)], Success, Some(Stop4to8), Some(30), None),
    case("no baseline, suppressed", Some(42), &[(30, 40.0)], Success, Some(Stop4to8), Some(30), None),
    case("no baseline, detectable", Some(42), &[(30, 5000.0)], Failure, Some(Stop4to8), Some(30), None),
    case("baseline older than 90 days", Some(42), &[(-91, 1e6), (30, 5000.0)], Failure, Some(Stop4to8), Some(30), None),
    case("baseline exactly 90 days before", Some(42), &[(-90, 1e6), (30, 5000.0)], Success, Some(Stop4to8), Some(30), None),
    case("baseline on the start day", Some(42), &[(0, 1e5), (40, 5000.0)], Success, Some(Stop4to8), Some(40), None),
    case("loads only after the stop", Some(42), &[(-10, 1e5), (50, 30.0)], Excluded, None, None, Some(NoOnTherapy)),
    case("latest on-therapy load decides", Some(42), &[(10, 30.0), (40, 5000.0)], Failure, Some(Stop4to8), Some(40), None),
    case("load on the stop day counts", Some(42), &[(42, 30.0), (60, 5000.0)], Success, Some(Stop4to8), Some(42), None),
    case("one day past eight weeks", Some(57), &[(-10, 1e5), (50, 5000.0)], Failure, Some(Stop8to20), Some(50), None),
    case("twelve weeks, 1.3 log drop", Some(84), &[(-10, 1e5), (80, 5000.0)], Failure, Some(Stop8to20), Some(80), None),
    case("exactly two log drop", Some(84), &[(-10, 1e5), (80, 1000.0)], Success, Some(Stop8to20), Some(80), None),
    case("day before twenty weeks, suppressed", Some(139), &[(-10, 1e6), (130, 30.0)], Success, Some(Stop8to20), Some(130), None),
    case("day before twenty weeks, no load", Some(139), &[(-10, 1e6), (150, 30.0)], Excluded, None, None, Some(NoOnTherapy)),
    case("no baseline, just suppressed", Some(100), &[(90, 49.0)], Success, Some(Stop8to20), Some(90), None),
];

pub fn check_label_table() -> Check {
    for c in &LABEL_CASES {
        let therapy = Therapy::new("p", c.name, Day(0), c.end.map(Day), [DrugId::Efavirenz]).expect("valid fixture");
        let vls: Vec<ViralLoad> = c.vls.iter().map(|&(d, v)| vl(d, v)).collect();
        let l = label_therapy(&therapy, &vls);
        let day = l.deciding_vl.map(|v| v.0 .0);
        if l.value != c.value || l.rule_fired != c.rule || day != c.deciding_day || l.reason != c.reason {
            return Err(format!(
                "`{}`: got {:?}/{:?}/{:?}/{:?}, expected {:?}/{:?}/{:?}/{:?}",
                c.name, l.value, l.rule_fired, day, l.reason, c.value, c.rule, c.deciding_day, c.reason
            ));
        }
    }
    Ok(format!("{} cases labelled as expected", LABEL_CASES.len()))
}

// ------------------------------------------------------------ protocol

/// Random sparse rows for `patients` patients with 1 to 3 rows each and a
/// logistic dependence on the first features.
pub fn toy_rows(patients: usize, dim: u32, seed: u64) -> (Vec<SparseVector>, Vec<bool>, Vec<String>) {
    let mut r = rng(seed);
    let truth: Vec<f64> = (0..dim).map(|j| if j < 3 { 1.5 } else { r.random_range(-0.3..0.3) }).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut owners = Vec::new();
    for p in 0..patients {
        for _ in 0..r.random_range(1..=3) {
            let mut entries = Vec::new();
            for j in 0..dim {
                if r.random_bool(0.3) {
                    entries.push((j, r.random_range(-1.0..1.0)));
                }
            }
            let score: f64 = entries.iter().map(|&(j, v)| truth[j as usize] * v).sum();
            labels.push(r.random_bool(1.0 / (1.0 + (-2.0 * score).exp())));
            rows.push(SparseVector::from_entries(entries));
            owners.push(format!("P{p:03}"));
        }
    }
    (rows, labels, owners)
}

pub fn check_cv_protocol(seed: u64) -> Check {
    let (rows, labels, owners) = toy_rows(60, 8, seed);
    let patients: Vec<&str> = owners.iter().map(String::as_str).collect();
    let config = CvConfig { seed, ..CvConfig::default() };
    let out = random_search_cv(&rows, &labels, &patients, 8, &config).map_err(|e| e.to_string())?;
    let expected_scores = config.folds * config.repeats;
    if out.results.len() != config.n_candidates {
        return Err(format!("{} candidates evaluated", out.results.len()));
    }
    if let Some(r) = out.results.iter().find(|r| r.fold_scores.len() != 25 || expected_scores != 25) {
        return Err(format!("candidate C={} has {} scores", r.c, r.fold_scores.len()));
    }
    let sel = &out.selection;
    if sel.rejected[sel.selected] {
        return Err("selected candidate was rejected".into());
    }
    for (i, r) in out.results.iter().enumerate() {
        if !sel.rejected[i] && r.c < out.selected_c {
            return Err(format!("non-rejected C={} is below selected C={}", r.c, out.selected_c));
        }
    }
    for (rep, fold_of) in out.plan.assignments.iter().enumerate() {
        let mut seen = std::collections::BTreeMap::new();
        for (i, &f) in fold_of.iter().enumerate() {
            if *seen.entry(patients[i]).or_insert(f) != f {
                return Err(format!("patient {} straddles folds in repeat {rep}", patients[i]));
            }
        }
    }
    for s in 0..20 {
        let split = split_by_patient(patients.iter().copied(), 0.8, seed + s).map_err(|e| e.to_string())?;
        if split.train.intersection(&split.test).next().is_some() || split.train.len() + split.test.len() != 60 {
            return Err(format!("split {s} is not a patient partition"));
        }
    }
    let kept = out.results.iter().enumerate().filter(|(i, _)| !sel.rejected[*i]).count();
    Ok(format!("{} candidates x {expected_scores} scores, selected C={:.3e} minimal among {kept} kept", out.results.len(), out.selected_c))
}

/// Lowest grid threshold by a plain rescan of every grid point.
pub fn rescan_threshold(probs: &[f64], positives: &[bool]) -> f64 {
    let n_pos = positives.iter().filter(|&&p| p).count() as u128;
    let n_neg = positives.len() as u128 - n_pos;
    let mut best: Option<(u128, f64)> = None;
    for i in 1..1000u32 {
        let thr = i as f64 / 1000.0;
        let mut tp = 0u128;
        let mut tn = 0u128;
        for (&p, &y) in probs.iter().zip(positives) {
            if y && p >= thr {
                tp += 1;
            }
            if !y && p < thr {
                tn += 1;
            }
        }
        let score = tp * n_neg + tn * n_pos;
        if best.is_none_or(|b| score > b.0) {
            best = Some((score, thr));
        }
    }
    best.expect("non-empty grid").1
}

pub fn check_threshold(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for k in 0..instances {
        let n = r.random_range(2..=80);
        let rate = r.random_range(0.1..0.9);
        let pos = both_classes(&mut r, n, rate);
        let probs: Vec<f64> = (0..n)
            .map(|i| {
                let base: f64 = if pos[i] { r.random_range(0.2..1.0) } else { r.random_range(0.0..0.8) };
                if k % 2 == 0 { (base * 1000.0).round() / 1000.0 } else { base }
            })
            .collect();
        let got = tune_threshold(&probs, &pos).map_err(|e| e.to_string())?;
        let expected = rescan_threshold(&probs, &pos);
        if got != expected {
            return Err(format!("instance {k}: threshold {got} vs rescan {expected}"));
        }
        let best = balanced_accuracy(&probs, &pos, got);
        for i in 1..1000 {
            if balanced_accuracy(&probs, &pos, i as f64 / 1000.0) > best + 1e-12 {
                return Err(format!("instance {k}: grid point {i} beats the tuned threshold"));
            }
        }
    }
    Ok(format!("{instances} instances agree with the exhaustive rescan"))
}

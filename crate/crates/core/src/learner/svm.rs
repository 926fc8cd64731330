//! L2-regularised hinge-loss linear SVM solved by dual coordinate descent.
//!
//! The bias is learned as the weight of an extra constant feature whose
//! value is [`SvmOptions::bias`], so it is regularised like every other
//! weight and the dual has only box constraints `0 <= alpha_i <= C`.

use crate::features::SparseVector;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LearnerError;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvmOptions {
    /// Stop once every projected gradient is below this in magnitude.
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Value of the appended constant feature; 0 disables the bias.
    pub bias: f64,
    /// Seed of the coordinate order.
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions { tolerance: 1e-6, max_epochs: 2000, bias: 1.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    pub w: Vec<f64>,
    pub b: f64,
    pub alpha: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    /// Dual objective after each epoch.
    pub dual_trace: Vec<f64>,
}

impl SvmSolution {
    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot(&self.w) + self.b
    }
}

fn sign(positive: bool) -> f64 {
    if positive {
        1.0
    } else {
        -1.0
    }
}

/// Dual objective `sum(alpha) - |w~|^2 / 2` where `w~` includes the bias
/// weight.
pub fn dual_objective(rows: &[&SparseVector], positive: &[bool], alpha: &[f64], dim: usize, bias: f64) -> f64 {
    let (w, wb) = primal_from_dual(rows, positive, alpha, dim, bias);
    alpha.iter().sum::<f64>() - 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + wb * wb)
}

/// `w~ = sum_i alpha_i y_i x~_i`, returned as (feature weights, bias weight).
pub fn primal_from_dual(rows: &[&SparseVector], positive: &[bool], alpha: &[f64], dim: usize, bias: f64) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; dim];
    let mut wb = 0.0;
    for ((x, &y), &a) in rows.iter().zip(positive).zip(alpha) {
        let c = a * sign(y);
        for &(j, v) in x.iter() {
            w[j as usize] += c * v;
        }
        wb += c * bias;
    }
    (w, wb)
}

/// Primal objective `|w~|^2 / 2 + C sum_i max(0, 1 - y_i (w.x_i + b))`.
pub fn primal_objective(rows: &[&SparseVector], positive: &[bool], w: &[f64], b: f64, c: f64, bias: f64) -> f64 {
    let wb = if bias != 0.0 { b / bias } else { 0.0 };
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + wb * wb);
    let loss: f64 = rows.iter().zip(positive).map(|(x, &y)| (1.0 - sign(y) * (x.dot(w) + b)).max(0.0)).sum();
    reg + c * loss
}

/// Trains on `rows` with labels `positive` (true maps to +1).
pub fn train_svm(
    rows: &[&SparseVector],
    positive: &[bool],
    dim: usize,
    c: f64,
    options: &SvmOptions,
) -> Result<SvmSolution, LearnerError> {
    train_svm_warm(rows, positive, dim, c, options, None)
}

/// Like [`train_svm`], starting from `initial_alpha` clipped to `[0, C]`.
pub fn train_svm_warm(
    rows: &[&SparseVector],
    positive: &[bool],
    dim: usize,
    c: f64,
    options: &SvmOptions,
    initial_alpha: Option<&[f64]>,
) -> Result<SvmSolution, LearnerError> {
    if rows.len() != positive.len() {
        return Err(LearnerError::LengthMismatch);
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(LearnerError::InvalidC(c));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return Err(LearnerError::SingleClass);
    }
    let bias = options.bias;
    let n = rows.len();
    let mut ptr = Vec::with_capacity(n + 1);
    ptr.push(0usize);
    let mut idx: Vec<usize> = Vec::new();
    let mut val: Vec<f64> = Vec::new();
    for x in rows {
        for &(j, v) in x.iter() {
            idx.push(j as usize);
            val.push(v);
        }
        ptr.push(idx.len());
    }
    let qd: Vec<f64> = rows.iter().map(|x| x.norm_squared() + bias * bias).collect();
    let ys: Vec<f64> = positive.iter().map(|&p| sign(p)).collect();
    let mut alpha: Vec<f64> = match initial_alpha {
        Some(a) if a.len() == n => a.iter().map(|&v| v.clamp(0.0, c)).collect(),
        _ => vec![0.0; n],
    };
    let (mut w, mut wb) = primal_from_dual(rows, positive, &alpha, dim, bias);

    // Variables stuck at a bound with a gradient pointing outwards are
    // dropped from the sweep; convergence is only declared after a sweep
    // over every variable.
    let mut order: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut dual_trace = Vec::new();
    let mut converged = false;
    let mut epochs = 0;
    while epochs < options.max_epochs {
        epochs += 1;
        order[..active].shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        let mut s = 0;
        while s < active {
            let i = order[s];
            if qd[i] <= 0.0 {
                s += 1;
                continue;
            }
            let y = ys[i];
            let (lo, hi) = (ptr[i], ptr[i + 1]);
            let mut dot = wb * bias;
            for k in lo..hi {
                dot += w[idx[k]] * val[k];
            }
            let g = y * dot - 1.0;
            let pg = if alpha[i] <= 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    order.swap(s, active);
                    continue;
                }
                g.min(0.0)
            } else if alpha[i] >= c {
                if g < pg_min_old {
                    active -= 1;
                    order.swap(s, active);
                    continue;
                }
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-14 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let d = (alpha[i] - old) * y;
                if d != 0.0 {
                    for k in lo..hi {
                        w[idx[k]] += d * val[k];
                    }
                    wb += d * bias;
                }
            }
            s += 1;
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>() + wb * wb;
        dual_trace.push(alpha.iter().sum::<f64>() - 0.5 * norm);
        let violation = pg_max.abs().max(pg_min.abs());
        let violation = if pg_max < pg_min { 0.0 } else { violation };
        if violation < options.tolerance {
            if active == n {
                converged = true;
                break;
            }
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }
    if w.iter().any(|v| !v.is_finite()) || !wb.is_finite() {
        return Err(LearnerError::NumericFailure);
    }
    Ok(SvmSolution { w, b: wb * bias, alpha, epochs, converged, dual_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_max_margin() {
        let a = SparseVector(vec![(0, 1.0)]);
        let b = SparseVector(vec![(0, -1.0)]);
        let s = train_svm(&[&a, &b], &[true, false], 2, 1000.0, &SvmOptions::default()).unwrap();
        assert!((s.w[0] - 1.0).abs() < 1e-6 && s.w[1].abs() < 1e-12 && s.b.abs() < 1e-6);
        assert!(s.converged);
    }

    #[test]
    fn single_class_rejected() {
        let a = SparseVector(vec![(0, 1.0)]);
        assert_eq!(train_svm(&[&a], &[true], 1, 1.0, &SvmOptions::default()), Err(LearnerError::SingleClass));
    }
}

//! k-means on z-scored two-dimensional points with k-means++ seeding and
//! restarts.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_RESTARTS: usize = 50;
pub const DEFAULT_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AxisScale {
    pub mean: f64,
    pub sd: f64,
}

impl AxisScale {
    fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = libm::sqrt(var);
        // a constant axis is centred but left unscaled
        AxisScale { mean, sd: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 } }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Per-axis z-score transform of (alpha, beta) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardization {
    pub alpha: AxisScale,
    pub beta: AxisScale,
}

impl Standardization {
    pub fn fit(points: &[(f64, f64)]) -> Self {
        Standardization {
            alpha: AxisScale::fit(points.iter().map(|p| p.0)),
            beta: AxisScale::fit(points.iter().map(|p| p.1)),
        }
    }

    pub fn forward(&self, p: (f64, f64)) -> (f64, f64) {
        (self.alpha.forward(p.0), self.beta.forward(p.1))
    }

    pub fn inverse(&self, z: (f64, f64)) -> (f64, f64) {
        (self.alpha.inverse(z.0), self.beta.inverse(z.1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {points} points")]
    TooFewPoints { k: usize, points: usize },
    #[error("k must be positive")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Centroids in the original coordinates, sorted lexicographically.
    pub centroids: Vec<(f64, f64)>,
    /// Centroid index of each input point, in input order.
    pub assignments: Vec<usize>,
    pub standardization: Standardization,
    /// Within-cluster sum of squares in z-space.
    pub sse: f64,
    /// SSE after each Lloyd iteration of the winning restart.
    pub sse_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { restarts: DEFAULT_RESTARTS, max_iterations: DEFAULT_MAX_ITERATIONS, seed: 0 }
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

fn nearest(p: (f64, f64), centroids: &[(f64, f64)]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, &c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        centroids.push(c);
        for (i, &p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, c));
        }
    }
    centroids
}

struct Run {
    centroids: Vec<(f64, f64)>,
    assignments: Vec<usize>,
    sse: f64,
    trace: Vec<f64>,
}

fn lloyd(points: &[(f64, f64)], mut centroids: Vec<(f64, f64)>, max_iterations: usize) -> Run {
    let k = centroids.len();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iterations {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let (j, _) = nearest(p, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (i, &p) in points.iter().enumerate() {
            let s = &mut sums[assignments[i]];
            s.0 += p.0;
            s.1 += p.1;
            s.2 += 1;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            // an empty cluster keeps its previous centroid
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        let after: f64 = points.iter().zip(&assignments).map(|(&p, &j)| dist2(p, centroids[j])).sum();
        trace.push(after);
        if !changed {
            break;
        }
    }
    let sse = points.iter().zip(&assignments).map(|(&p, &j)| dist2(p, centroids[j])).sum();
    Run { centroids, assignments, sse, trace }
}

/// Clusters (alpha, beta) pairs after z-scoring each axis.
///
/// The result does not depend on the order of `points`: they are sorted
/// before seeding and the assignments are mapped back afterwards.
pub fn cluster_params(points: &[(f64, f64)], k: usize, options: KMeansOptions) -> Result<Clustering, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if points.len() < k {
        return Err(ClusterError::TooFewPoints { k, points: points.len() });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a].0.total_cmp(&points[b].0).then(points[a].1.total_cmp(&points[b].1)).then(a.cmp(&b))
    });
    let sorted: Vec<(f64, f64)> = order.iter().map(|&i| points[i]).collect();
    let standardization = Standardization::fit(&sorted);
    let z: Vec<(f64, f64)> = sorted.iter().map(|&p| standardization.forward(p)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<Run> = None;
    for _ in 0..options.restarts.max(1) {
        let init = seed_plus_plus(&z, k, &mut rng);
        let run = lloyd(&z, init, options.max_iterations.max(1));
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");

    let mut by_position: Vec<usize> = (0..k).collect();
    by_position.sort_by(|&a, &b| {
        let ca = best.centroids[a];
        let cb = best.centroids[b];
        ca.0.total_cmp(&cb.0).then(ca.1.total_cmp(&cb.1))
    });
    let mut relabel = vec![0; k];
    for (new, &old) in by_position.iter().enumerate() {
        relabel[old] = new;
    }
    let centroids = by_position.iter().map(|&j| standardization.inverse(best.centroids[j])).collect();
    let mut assignments = vec![0; points.len()];
    for (sorted_pos, &original) in order.iter().enumerate() {
        assignments[original] = relabel[best.assignments[sorted_pos]];
    }
    Ok(Clustering { centroids, assignments, standardization, sse: best.sse, sse_trace: best.trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_obvious_groups() {
        let pts = [(0.0, 0.0), (0.1, 0.0), (10.0, 10.0), (10.1, 10.0)];
        let c = cluster_params(&pts, 2, KMeansOptions::default()).unwrap();
        assert!((c.centroids[0].0 - 0.05).abs() < 1e-12 && c.centroids[0].1.abs() < 1e-12);
        assert!((c.centroids[1].0 - 10.05).abs() < 1e-12 && (c.centroids[1].1 - 10.0).abs() < 1e-12);
        assert_eq!(c.assignments, vec![0, 0, 1, 1]);
    }

    #[test]
    fn k_equals_n_has_zero_sse() {
        let pts = [(1.0, 2.0), (3.0, -1.0), (0.5, 0.5)];
        let c = cluster_params(&pts, 3, KMeansOptions::default()).unwrap();
        assert!(c.sse < 1e-24);
    }

    #[test]
    fn rejects_large_k() {
        assert_eq!(
            cluster_params(&[(0.0, 0.0)], 2, KMeansOptions::default()).unwrap_err(),
            ClusterError::TooFewPoints { k: 2, points: 1 }
        );
    }
}

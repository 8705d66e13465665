use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClusterAssignment;
use crate::dimred::ReducedPoints;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// `k x dim` row-major, indexed by the compacted labels.
    pub centroids: Vec<f64>,
    /// Within-cluster sum of squares after every assignment step.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` is reached.
pub fn kmeans_fit(
    points: &ReducedPoints,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<KMeansFit> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::validation(format!(
            "k-means needs 1 <= k <= {n}, got k = {k}"
        )));
    }
    let dim = points.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| linalg::squared_distance(points.row(i), points.row(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(points.row(pick));
        for (i, m) in nearest.iter_mut().enumerate() {
            *m = m.min(linalg::squared_distance(points.row(i), points.row(pick)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut wcss_history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut wcss = 0.0;
        for i in 0..n {
            let p = points.row(i);
            let (best, d) = (0..k)
                .map(|c| {
                    (
                        c,
                        linalg::squared_distance(p, &centroids[c * dim..(c + 1) * dim]),
                    )
                })
                .fold(
                    (0, f64::INFINITY),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                );
            wcss += d;
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        wcss_history.push(wcss);
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
    }

    // Drop centroids that ended up with no members.
    let mut used = vec![false; k];
    for &l in &labels {
        used[l] = true;
    }
    let mut remap = vec![-1i32; k];
    let mut kept = Vec::new();
    for c in 0..k {
        if used[c] {
            remap[c] = (kept.len() / dim.max(1)) as i32;
            kept.extend_from_slice(&centroids[c * dim..(c + 1) * dim]);
        }
    }
    let n_clusters = used.iter().filter(|&&u| u).count();
    let labels = labels.iter().map(|&l| remap[l]).collect();
    Ok(KMeansFit {
        assignment: ClusterAssignment { labels, n_clusters },
        centroids: kept,
        wcss_history,
        iterations,
    })
}

pub fn kmeans(
    points: &ReducedPoints,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment> {
    kmeans_fit(points, k, seed, max_iters).map(|f| f.assignment)
}

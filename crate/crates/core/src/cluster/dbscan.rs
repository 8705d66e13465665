use std::collections::VecDeque;

use super::{distance_matrix, ClusterAssignment, NOISE};
use crate::dimred::ReducedPoints;
use crate::error::{Error, Result};

/// Density-based clustering with core/border/noise semantics.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are the connected components of core points,
/// numbered by their first core point in input order; a border point joins
/// the lowest-numbered cluster among its core neighbours.
pub fn dbscan(points: &ReducedPoints, eps: f64, min_pts: usize) -> Result<ClusterAssignment> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::validation(format!(
            "DBSCAN eps must be positive, got {eps}"
        )));
    }
    if min_pts == 0 {
        return Err(Error::validation("DBSCAN min_pts must be at least 1"));
    }
    let n = points.len();
    let dist = distance_matrix(points);
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist[i * n + j] <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![NOISE; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if core[q] && labels[q] == NOISE {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        labels[i] = neighbours[i]
            .iter()
            .filter(|&&j| core[j])
            .map(|&j| labels[j])
            .min()
            .unwrap_or(NOISE);
    }
    Ok(ClusterAssignment {
        labels,
        n_clusters: next as usize,
    })
}

/// Median distance to the `min_pts`-th nearest point (self included); a
/// scale-free default radius for [`dbscan`].
pub fn dbscan_auto_eps(points: &ReducedPoints, min_pts: usize) -> Result<f64> {
    let n = points.len();
    if n == 0 || min_pts == 0 || min_pts > n {
        return Err(Error::validation(format!(
            "cannot derive eps for {n} points with min_pts = {min_pts}"
        )));
    }
    let dist = distance_matrix(points);
    let mut kth: Vec<f64> = (0..n)
        .map(|i| {
            let mut row = dist[i * n..(i + 1) * n].to_vec();
            row.sort_by(f64::total_cmp);
            row[min_pts - 1]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    let eps = kth[n / 2];
    Ok(if eps > 0.0 { eps } else { f64::MIN_POSITIVE })
}

//! Flat clustering of reduced points: HDBSCAN, DBSCAN and k-means.
//!
//! All distances are Euclidean. Label `-1` marks noise.

mod dbscan;
mod hdbscan;
mod kmeans;

pub use dbscan::{dbscan, dbscan_auto_eps};
pub use hdbscan::{
    core_distances, hdbscan, hdbscan_fit, mutual_reachability_mst, HdbscanFit, HdbscanParams,
    MstEdge,
};
pub use kmeans::{kmeans, kmeans_fit, KMeansFit};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dimred::ReducedPoints;
use crate::error::{Error, Result};
use crate::linalg;

pub const NOISE: i32 = -1;

/// Per-point cluster labels in `{-1} ∪ [0, n_clusters)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    /// Renumbers labels by order of first appearance, dropping empty ids.
    pub fn from_raw(raw: Vec<i32>) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .into_iter()
            .map(|l| {
                if l < 0 {
                    NOISE
                } else {
                    let next = map.len() as i32;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        ClusterAssignment {
            labels,
            n_clusters: map.len(),
        }
    }

    /// Member indices of every cluster, in label order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Checks the label invariants: every label is noise or below
    /// `n_clusters`, and every cluster id is used.
    pub fn is_valid(&self) -> bool {
        let mut used = vec![false; self.n_clusters];
        for &l in &self.labels {
            if l == NOISE {
                continue;
            }
            if l < 0 || l as usize >= self.n_clusters {
                return false;
            }
            used[l as usize] = true;
        }
        used.into_iter().all(|u| u)
    }

    /// True when both assignments induce the same partition, up to renaming.
    pub fn same_partition(&self, other: &ClusterAssignment) -> bool {
        if self.labels.len() != other.labels.len() {
            return false;
        }
        let mut fwd = std::collections::HashMap::new();
        let mut back = std::collections::HashMap::new();
        self.labels.iter().zip(&other.labels).all(|(&a, &b)| {
            if (a == NOISE) != (b == NOISE) {
                return false;
            }
            *fwd.entry(a).or_insert(b) == b && *back.entry(b).or_insert(a) == a
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Kmeans,
    Dbscan,
    Hdbscan,
}

impl ClusterMethod {
    pub const ALL: [ClusterMethod; 3] = [
        ClusterMethod::Kmeans,
        ClusterMethod::Dbscan,
        ClusterMethod::Hdbscan,
    ];
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterMethod::Kmeans => "kmeans",
            ClusterMethod::Dbscan => "dbscan",
            ClusterMethod::Hdbscan => "hdbscan",
        })
    }
}

impl FromStr for ClusterMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "kmeans" => Ok(ClusterMethod::Kmeans),
            "dbscan" => Ok(ClusterMethod::Dbscan),
            "hdbscan" => Ok(ClusterMethod::Hdbscan),
            other => Err(Error::validation(format!(
                "unknown clustering method `{other}` (expected kmeans, dbscan or hdbscan)"
            ))),
        }
    }
}

/// Dense row-major matrix of pairwise Euclidean distances.
pub(crate) fn distance_matrix(points: &ReducedPoints) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = linalg::distance(points.row(i), points.row(j));
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_labels_are_compacted() {
        let a = ClusterAssignment::from_raw(vec![5, -1, 2, 5, 2, -3]);
        assert_eq!(a.labels, [0, -1, 1, 0, 1, -1]);
        assert_eq!(a.n_clusters, 2);
        assert!(a.is_valid());
        assert_eq!(a.groups(), [vec![0, 3], vec![2, 4]]);
    }

    #[test]
    fn partition_equality_ignores_names() {
        let a = ClusterAssignment::from_raw(vec![0, 0, 1, -1]);
        let b = ClusterAssignment::from_raw(vec![1, 1, 0, -1]);
        let c = ClusterAssignment::from_raw(vec![0, 1, 1, -1]);
        assert!(a.same_partition(&b));
        assert!(!a.same_partition(&c));
    }
}

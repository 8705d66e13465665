//! Dimensionality reduction of a user's retrieved item embeddings.

mod pca;
mod umap;

pub use pca::{pca_fit, pca_fit_transform, PcaFit};
pub use umap::{fit_ab, umap_fit, umap_fit_transform, FuzzyGraph, UmapFit, UmapParams};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Points in the reduced space; row `k` belongs to `item_ids[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPoints {
    pub item_ids: Vec<String>,
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl ReducedPoints {
    pub fn new(item_ids: Vec<String>, dim: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != item_ids.len() * dim {
            return Err(Error::validation(format!(
                "{} points of dimension {dim} need {} coordinates, got {}",
                item_ids.len(),
                item_ids.len() * dim,
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("reduced coordinates must be finite"));
        }
        Ok(ReducedPoints {
            item_ids,
            dim,
            coords,
        })
    }

    /// Unlabelled points, for callers that only need geometry.
    pub fn from_coords(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = coords.len().checked_div(dim).unwrap_or(0);
        Self::new((0..n).map(|k| k.to_string()).collect(), dim, coords)
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimRedMethod {
    None,
    Pca,
    Umap,
}

impl DimRedMethod {
    pub const ALL: [DimRedMethod; 3] = [DimRedMethod::None, DimRedMethod::Pca, DimRedMethod::Umap];
}

impl fmt::Display for DimRedMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DimRedMethod::None => "none",
            DimRedMethod::Pca => "pca",
            DimRedMethod::Umap => "umap",
        })
    }
}

impl FromStr for DimRedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(DimRedMethod::None),
            "pca" => Ok(DimRedMethod::Pca),
            "umap" => Ok(DimRedMethod::Umap),
            other => Err(Error::validation(format!(
                "unknown dimensionality reduction method `{other}` (expected none, pca or umap)"
            ))),
        }
    }
}

/// Reduces `points` to `params.n_components` dimensions, or passes them
/// through unchanged for [`DimRedMethod::None`].
pub fn reduce(
    points: &EmbeddingMatrix,
    method: DimRedMethod,
    params: &UmapParams,
) -> Result<ReducedPoints> {
    match method {
        DimRedMethod::None => {
            ReducedPoints::new(points.ids().to_vec(), points.dim(), points.to_f64())
        }
        DimRedMethod::Pca => pca_fit_transform(points, params.n_components),
        DimRedMethod::Umap => umap_fit_transform(points, params),
    }
}

/// Ranks of all other points by distance from `i` (ties by index).
fn neighbour_order(data: &[f64], dim: usize, i: usize) -> Vec<usize> {
    let n = data.len() / dim;
    let p = &data[i * dim..(i + 1) * dim];
    let mut others: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| {
            (
                linalg::squared_distance(p, &data[j * dim..(j + 1) * dim]),
                j,
            )
        })
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.into_iter().map(|(_, j)| j).collect()
}

/// Trustworthiness of an embedding at neighbourhood size `k`, in `[0, 1]`.
///
/// Penalizes points that are among the `k` nearest neighbours in the
/// embedding but not in the original space, weighted by their original rank.
pub fn trustworthiness(
    original: &[f64],
    original_dim: usize,
    embedded: &[f64],
    embedded_dim: usize,
    k: usize,
) -> f64 {
    let n = original.len() / original_dim;
    assert_eq!(n, embedded.len() / embedded_dim, "row counts differ");
    assert!(2 * n > 3 * k + 1, "k too large for {n} points");
    let mut penalty = 0.0;
    for i in 0..n {
        let orig = neighbour_order(original, original_dim, i);
        let mut rank = vec![0usize; n];
        for (r, &j) in orig.iter().enumerate() {
            rank[j] = r + 1;
        }
        for &j in neighbour_order(embedded, embedded_dim, i).iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

/// Fraction of points whose nearest neighbour carries the same label.
pub fn nearest_neighbour_purity(data: &[f64], dim: usize, labels: &[usize]) -> f64 {
    let n = labels.len();
    let hits = (0..n)
        .filter(|&i| labels[neighbour_order(data, dim, i)[0]] == labels[i])
        .count();
    hits as f64 / n as f64
}

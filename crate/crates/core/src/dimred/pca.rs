use super::ReducedPoints;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// A fitted principal component projection.
#[derive(Debug, Clone)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// `r x d` row-major; rows are unit-length principal axes.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub dim: usize,
}

impl PcaFit {
    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.dim..(k + 1) * self.dim]
    }

    /// Projects row-major `data` (same dimension as the fit) onto the components.
    pub fn transform(&self, data: &[f64]) -> Vec<f64> {
        let r = self.n_components();
        let mut out = Vec::with_capacity(data.len() / self.dim * r);
        for row in data.chunks_exact(self.dim) {
            for k in 0..r {
                let c = self.component(k);
                out.push(
                    row.iter()
                        .zip(&self.mean)
                        .zip(c)
                        .map(|((x, m), w)| (x - m) * w)
                        .sum(),
                );
            }
        }
        out
    }
}

/// Fits `r` principal components of row-major `data` with `dim` columns.
///
/// Components come from the sample covariance, ordered by descending
/// eigenvalue; each is signed so its largest-magnitude coordinate is positive.
pub fn pca_fit(data: &[f64], dim: usize, r: usize) -> Result<PcaFit> {
    let n = data.len() / dim;
    if n < 2 {
        return Err(Error::validation("PCA needs at least 2 points"));
    }
    if r == 0 || r > n.min(dim) {
        return Err(Error::validation(format!(
            "PCA output dimension {r} must be in 1..={}",
            n.min(dim)
        )));
    }
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; dim * dim];
    let mut centered = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((c, x), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - m;
        }
        for a in 0..dim {
            let ca = centered[a];
            for b in a..dim {
                cov[a * dim + b] += ca * centered[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..dim {
        for b in a..dim {
            let v = cov[a * dim + b] / denom;
            cov[a * dim + b] = v;
            cov[b * dim + a] = v;
        }
    }
    let (values, vectors) = linalg::symmetric_eigen(&cov, dim);
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::with_capacity(r * dim);
    for k in 0..r {
        let v = &vectors[k * dim..(k + 1) * dim];
        let pivot = v.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| x * sign));
    }
    let explained_variance: Vec<f64> = values[..r].iter().map(|v| v.max(0.0)).collect();
    let explained_variance_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(PcaFit {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        dim,
    })
}

pub fn pca_fit_transform(points: &EmbeddingMatrix, r: usize) -> Result<ReducedPoints> {
    let data = points.to_f64();
    let fit = pca_fit(&data, points.dim(), r)?;
    ReducedPoints::new(points.ids().to_vec(), r, fit.transform(&data))
}

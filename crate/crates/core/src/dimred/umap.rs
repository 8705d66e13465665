//! Uniform manifold approximation and projection.
//!
//! Exact kNN graph, per-point smooth-kNN calibration, fuzzy union of the
//! directed memberships, random initial layout, then negative-sampling SGD
//! on the low-dimensional curve `1 / (1 + a d^(2b))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ReducedPoints;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg;

const SIGMA_TOLERANCE: f64 = 1e-5;
const SIGMA_MAX_ITERS: usize = 64;
const INIT_RANGE: f64 = 10.0;
const GRAD_CLIP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub seed: u64,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 15,
            n_components: 3,
            min_dist: 0.0,
            n_epochs: 200,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            seed: 42,
        }
    }
}

impl UmapParams {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.n_neighbors < 2 || self.n_neighbors >= n_points {
            return Err(Error::validation(format!(
                "UMAP n_neighbors must be in 2..{n_points}, got {}",
                self.n_neighbors
            )));
        }
        if self.n_components == 0 {
            return Err(Error::validation("UMAP n_components must be at least 1"));
        }
        if !(self.min_dist >= 0.0 && self.min_dist.is_finite()) {
            return Err(Error::validation("UMAP min_dist must be non-negative"));
        }
        if self.n_epochs == 0 {
            return Err(Error::validation("UMAP n_epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Least-squares fit of `1 / (1 + a x^(2b))` to the target membership curve
/// (1 below `min_dist`, `exp(-(x - min_dist) / spread)` above) on 300 evenly
/// spaced points of `[0, 3 * spread]`, by Levenberg-Marquardt.
pub fn fit_ab(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|k| 3.0 * spread * k as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut err = sse(a, b);
    for _ in 0..500 {
        // Normal equations J^T J and J^T r for the two parameters.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let (da, db, r) = if x > 0.0 {
                let p = x.powf(2.0 * b);
                let f = 1.0 / (1.0 + a * p);
                let f2 = f * f;
                (-p * f2, -a * p * 2.0 * x.ln() * f2, f - y)
            } else {
                (0.0, 0.0, 1.0 - y)
            };
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..50 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            if det == 0.0 {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let e = sse(na, nb);
            if e.is_finite() && e < err {
                let converged = (err - e) <= 1e-15 * err.max(1e-300);
                a = na;
                b = nb;
                err = e;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

/// Symmetric fuzzy membership graph, stored as sorted adjacency rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl FuzzyGraph {
    pub fn n_points(&self) -> usize {
        self.rows.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    /// Fuzzy union of two memberships: `a + b - a b`.
    pub fn union(a: f64, b: f64) -> f64 {
        a + b - a * b
    }
}

/// Everything computed by one UMAP fit, for inspection.
#[derive(Debug, Clone)]
pub struct UmapFit {
    pub embedding: ReducedPoints,
    pub graph: FuzzyGraph,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `|sum_j exp(-max(0, d_ij - rho_i) / sigma_i) - log2(k)|` per point.
    pub sigma_residuals: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

fn knn(data: &[f64], dim: usize, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = data.len() / dim;
    (0..n)
        .map(|i| {
            let p = &data[i * dim..(i + 1) * dim];
            let mut d: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, linalg::distance(p, &data[j * dim..(j + 1) * dim])))
                .collect();
            d.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
            d.truncate(k);
            d
        })
        .collect()
}

fn membership_sum(dists: &[(usize, f64)], rho: f64, sigma: f64) -> f64 {
    dists
        .iter()
        .map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp())
        .sum()
}

/// Bisection for `sigma` with `sum = log2(k)`. Returns `(sigma, residual)`.
fn smooth_knn_sigma(dists: &[(usize, f64)], rho: f64, target: f64) -> (f64, f64) {
    let (mut lo, mut hi, mut mid) = (0.0, f64::INFINITY, 1.0);
    let mut residual = f64::INFINITY;
    for _ in 0..SIGMA_MAX_ITERS {
        let psum = membership_sum(dists, rho, mid);
        residual = (psum - target).abs();
        if residual < SIGMA_TOLERANCE {
            return (mid, residual);
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() {
                mid * 2.0
            } else {
                (lo + hi) / 2.0
            };
        }
    }
    let floor = 1e-3 * dists.iter().map(|&(_, d)| d).sum::<f64>() / dists.len() as f64;
    if mid < floor {
        mid = floor;
        residual = (membership_sum(dists, rho, mid) - target).abs();
    }
    (mid, residual)
}

pub fn umap_fit(points: &EmbeddingMatrix, params: &UmapParams) -> Result<UmapFit> {
    umap_fit_raw(
        points.ids().to_vec(),
        &points.to_f64(),
        points.dim(),
        params,
    )
}

pub fn umap_fit_transform(points: &EmbeddingMatrix, params: &UmapParams) -> Result<ReducedPoints> {
    umap_fit(points, params).map(|f| f.embedding)
}

pub(crate) fn umap_fit_raw(
    ids: Vec<String>,
    data: &[f64],
    dim: usize,
    params: &UmapParams,
) -> Result<UmapFit> {
    let n = ids.len();
    params.validate(n)?;
    let k = params.n_neighbors;
    let neighbours = knn(data, dim, k);
    let target = (k as f64).log2();

    let mut rho = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for nb in &neighbours {
        let r = nb[0].1;
        let (s, res) = smooth_knn_sigma(nb, r, target);
        rho.push(r);
        sigma.push(s);
        residuals.push(res);
    }

    // Directed memberships, then each undirected pair's union evaluated on
    // both rows from the same two numbers.
    let mut directed: Vec<Vec<(usize, f64)>> = neighbours
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut row: Vec<(usize, f64)> = nb
                .iter()
                .map(|&(j, d)| (j, (-(d - rho[i]).max(0.0) / sigma[i]).exp()))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    let lookup = |rows: &[Vec<(usize, f64)>], i: usize, j: usize| -> f64 {
        rows[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| rows[i][p].1)
            .unwrap_or(0.0)
    };
    let mut sym: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in &directed[i] {
            sym[i].push((j, 0.0));
            sym[j].push((i, 0.0));
        }
    }
    for (i, row) in sym.iter_mut().enumerate() {
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by_key(|e| e.0);
        for e in row.iter_mut() {
            let a = lookup(&directed, i, e.0);
            let b = lookup(&directed, e.0, i);
            e.1 = FuzzyGraph::union(a, b);
        }
    }
    directed.clear();
    let graph = FuzzyGraph { rows: sym };

    let (a, b) = fit_ab(1.0, params.min_dist);
    let embedding = optimize_layout(&graph, params, a, b);
    Ok(UmapFit {
        embedding: ReducedPoints::new(ids, params.n_components, embedding)?,
        graph,
        rho,
        sigma,
        sigma_residuals: residuals,
        a,
        b,
    })
}

fn clip(v: f32) -> f32 {
    v.clamp(-GRAD_CLIP as f32, GRAD_CLIP as f32)
}

/// Stochastic layout optimization. The working copy is `f32`, matching the
/// precision of the reference implementation; the result is widened.
fn optimize_layout(graph: &FuzzyGraph, params: &UmapParams, a: f64, b: f64) -> Vec<f64> {
    let n = graph.n_points();
    let dim = params.n_components;
    let n_epochs = params.n_epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut emb: Vec<f32> = (0..n * dim)
        .map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE) as f32)
        .collect();

    let max_w = graph
        .rows
        .iter()
        .flatten()
        .map(|&(_, w)| w)
        .fold(0.0, f64::max);
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut epochs_per_sample = Vec::new();
    for (i, row) in graph.rows.iter().enumerate() {
        for &(j, w) in row {
            if w <= 0.0 || w < max_w / n_epochs as f64 {
                continue;
            }
            heads.push(i);
            tails.push(j);
            epochs_per_sample.push(max_w / w);
        }
    }
    let neg_rate = params.negative_sample_rate as f64;
    let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();
    let mut grad = vec![0.0f32; dim];
    let (a, b) = (a as f32, b as f32);

    for epoch in 0..n_epochs {
        let alpha = (params.learning_rate * (1.0 - epoch as f64 / n_epochs as f64)) as f32;
        let e = epoch as f64;
        for edge in 0..heads.len() {
            if next_sample[edge] > e {
                continue;
            }
            let (j, k) = (heads[edge], tails[edge]);
            let dist_sq = sq_dist(&emb, dim, j, k);
            let coeff = if dist_sq > 0.0 {
                let pow_b = dist_sq.powf(b);
                -2.0 * a * b * (pow_b / dist_sq) / (a * pow_b + 1.0)
            } else {
                0.0
            };
            for d in 0..dim {
                grad[d] = clip(coeff * (emb[j * dim + d] - emb[k * dim + d]));
            }
            for d in 0..dim {
                emb[j * dim + d] += grad[d] * alpha;
                emb[k * dim + d] -= grad[d] * alpha;
            }
            next_sample[edge] += epochs_per_sample[edge];

            let n_neg = ((e - next_negative[edge]) / epochs_per_negative[edge]).max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                if other == j {
                    continue;
                }
                let dist_sq = sq_dist(&emb, dim, j, other);
                if dist_sq > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0));
                    for d in 0..dim {
                        emb[j * dim + d] +=
                            clip(coeff * (emb[j * dim + d] - emb[other * dim + d])) * alpha;
                    }
                } else {
                    for d in 0..dim {
                        emb[j * dim + d] += GRAD_CLIP as f32 * alpha;
                    }
                }
            }
            next_negative[edge] += n_neg as f64 * epochs_per_negative[edge];
        }
    }
    emb.into_iter().map(f64::from).collect()
}

fn sq_dist(emb: &[f32], dim: usize, i: usize, j: usize) -> f32 {
    emb[i * dim..(i + 1) * dim]
        .iter()
        .zip(&emb[j * dim..(j + 1) * dim])
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

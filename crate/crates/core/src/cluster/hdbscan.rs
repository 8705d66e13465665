//! HDBSCAN: mutual-reachability MST, single-linkage hierarchy, condensed
//! tree and excess-of-mass cluster selection.
//!
//! The root of the condensed tree is selected only when it never splits into
//! two clusters of `min_cluster_size`, so data made of one dense group yields
//! one cluster instead of nothing.

use serde::{Deserialize, Serialize};

use super::{distance_matrix, ClusterAssignment, NOISE};
use crate::dimred::ReducedPoints;
use crate::error::{Error, Result};

/// Largest finite lambda; zero-distance merges are clamped here.
const LAMBDA_CAP: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_samples: usize,
    pub min_cluster_size: usize,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_samples: 8,
            min_cluster_size: 30,
        }
    }
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples == 0 {
            return Err(Error::validation("HDBSCAN min_samples must be at least 1"));
        }
        if self.min_cluster_size < 2 {
            return Err(Error::validation(
                "HDBSCAN min_cluster_size must be at least 2",
            ));
        }
        Ok(())
    }
}

/// MST edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Distance from each point to its `min_samples`-th nearest point, the
/// point itself counting as the first.
pub fn core_distances(dist: &[f64], n: usize, min_samples: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut row = dist[i * n..(i + 1) * n].to_vec();
            let k = min_samples.min(n) - 1;
            row.select_nth_unstable_by(k, f64::total_cmp);
            row[k]
        })
        .collect()
}

fn tie_key(w: f64, i: usize, j: usize) -> (f64, usize, usize) {
    (w, i.min(j), i.max(j))
}

fn key_less(a: (f64, usize, usize), b: (f64, usize, usize)) -> bool {
    a.0.total_cmp(&b.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .is_lt()
}

/// Prim's algorithm on the complete mutual-reachability graph
/// `max(core_a, core_b, d(a, b))`, ties broken by `(min index, max index)`.
/// Edges are returned sorted by `(weight, a, b)`.
pub fn mutual_reachability_mst(dist: &[f64], n: usize, core: &[f64]) -> Vec<MstEdge> {
    if n < 2 {
        return Vec::new();
    }
    let mr = |i: usize, j: usize| dist[i * n + j].max(core[i]).max(core[j]);
    let mut in_tree = vec![false; n];
    let mut best: Vec<((f64, usize, usize), usize)> =
        vec![((f64::INFINITY, usize::MAX, usize::MAX), usize::MAX); n];
    let mut current = 0;
    in_tree[0] = true;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let cand = tie_key(mr(current, j), current, j);
            if key_less(cand, best[j].0) {
                best[j] = (cand, current);
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&x, &y| {
                let (kx, ky) = (best[x].0, best[y].0);
                kx.0.total_cmp(&ky.0)
                    .then(kx.1.cmp(&ky.1))
                    .then(kx.2.cmp(&ky.2))
            })
            .expect("vertices remain");
        in_tree[next] = true;
        let from = best[next].1;
        edges.push(MstEdge {
            a: from.min(next),
            b: from.max(next),
            weight: best[next].0 .0,
        });
        current = next;
    }
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    edges
}

#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Single-linkage merges; node ids `< n` are points, `n + k` is merge `k`.
fn single_linkage(edges: &[MstEdge], n: usize) -> Vec<Merge> {
    let mut parent: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra == rb {
            continue;
        }
        let total = size[ra] + size[rb];
        merges.push(Merge {
            left: node_of[ra],
            right: node_of[rb],
            distance: e.weight,
            size: total,
        });
        let (big, small) = if size[ra] >= size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        parent[small] = big;
        size[big] = total;
        node_of[big] = n + merges.len() - 1;
    }
    merges
}

/// A cluster of the condensed tree.
#[derive(Debug, Clone)]
pub struct CondensedCluster {
    pub parent: Option<usize>,
    pub birth_lambda: f64,
    pub children: Vec<usize>,
    /// Points that fell out of this cluster, with the lambda they left at.
    pub points: Vec<(usize, f64)>,
    pub size: usize,
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        (1.0 / distance).min(LAMBDA_CAP)
    } else {
        LAMBDA_CAP
    }
}

fn condense(merges: &[Merge], n: usize, min_cluster_size: usize) -> Vec<CondensedCluster> {
    let node_size = |node: usize| if node < n { 1 } else { merges[node - n].size };
    let leaves = |node: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                stack.push(merges[x - n].right);
                stack.push(merges[x - n].left);
            }
        }
        out
    };
    let root = if merges.is_empty() {
        0
    } else {
        n + merges.len() - 1
    };
    let mut clusters = vec![CondensedCluster {
        parent: None,
        birth_lambda: 0.0,
        children: Vec::new(),
        points: Vec::new(),
        size: node_size(root),
    }];
    let mut stack = vec![(root, 0usize)];
    while let Some((mut node, cluster)) = stack.pop() {
        loop {
            if node < n {
                clusters[cluster].points.push((node, LAMBDA_CAP));
                break;
            }
            let m = merges[node - n];
            let lambda = lambda_of(m.distance);
            let (ls, rs) = (node_size(m.left), node_size(m.right));
            match (ls >= min_cluster_size, rs >= min_cluster_size) {
                (true, true) => {
                    for (child, size) in [(m.left, ls), (m.right, rs)] {
                        let id = clusters.len();
                        clusters.push(CondensedCluster {
                            parent: Some(cluster),
                            birth_lambda: lambda,
                            children: Vec::new(),
                            points: Vec::new(),
                            size,
                        });
                        clusters[cluster].children.push(id);
                        stack.push((child, id));
                    }
                    break;
                }
                (true, false) => {
                    for p in leaves(m.right) {
                        clusters[cluster].points.push((p, lambda));
                    }
                    node = m.left;
                }
                (false, true) => {
                    for p in leaves(m.left) {
                        clusters[cluster].points.push((p, lambda));
                    }
                    node = m.right;
                }
                (false, false) => {
                    for p in leaves(node) {
                        clusters[cluster].points.push((p, lambda));
                    }
                    break;
                }
            }
        }
    }
    clusters
}

fn stabilities(clusters: &[CondensedCluster]) -> Vec<f64> {
    clusters
        .iter()
        .map(|c| {
            let from_points: f64 = c.points.iter().map(|&(_, l)| l - c.birth_lambda).sum();
            let from_children: f64 = c
                .children
                .iter()
                .map(|&k| (clusters[k].birth_lambda - c.birth_lambda) * clusters[k].size as f64)
                .sum();
            from_points + from_children
        })
        .collect()
}

/// Excess-of-mass selection below the root. The root is born at lambda 0,
/// which would let it outweigh any split, so it only stands alone.
fn select_clusters(clusters: &[CondensedCluster], stability: &[f64]) -> Vec<bool> {
    let m = clusters.len();
    let mut selected = vec![false; m];
    if m == 1 {
        selected[0] = true;
        return selected;
    }
    let mut best = stability.to_vec();
    // Children always have larger ids than their parent; cluster 0 is the root.
    for c in (1..m).rev() {
        let kids = &clusters[c].children;
        if kids.is_empty() {
            selected[c] = true;
            continue;
        }
        let child_sum: f64 = kids.iter().map(|&k| best[k]).sum();
        if child_sum > best[c] {
            best[c] = child_sum;
        } else {
            selected[c] = true;
            let mut stack = kids.clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend_from_slice(&clusters[k].children);
            }
        }
    }
    selected
}

/// Intermediate products of an HDBSCAN run.
#[derive(Debug, Clone)]
pub struct HdbscanFit {
    pub assignment: ClusterAssignment,
    pub core_distances: Vec<f64>,
    pub mst: Vec<MstEdge>,
    pub condensed: Vec<CondensedCluster>,
    pub stability: Vec<f64>,
    pub selected: Vec<usize>,
}

impl HdbscanFit {
    pub fn mst_weight(&self) -> f64 {
        self.mst.iter().map(|e| e.weight).sum()
    }
}

pub fn hdbscan_fit(points: &ReducedPoints, params: &HdbscanParams) -> Result<HdbscanFit> {
    params.validate()?;
    let n = points.len();
    if n < params.min_cluster_size {
        return Err(Error::validation(format!(
            "HDBSCAN needs at least min_cluster_size = {} points, got {n}",
            params.min_cluster_size
        )));
    }
    let dist = distance_matrix(points);
    let core = core_distances(&dist, n, params.min_samples);
    let mst = mutual_reachability_mst(&dist, n, &core);
    let merges = single_linkage(&mst, n);
    let condensed = condense(&merges, n, params.min_cluster_size);
    let stability = stabilities(&condensed);
    let is_selected = select_clusters(&condensed, &stability);

    let selected: Vec<usize> = (0..condensed.len()).filter(|&c| is_selected[c]).collect();
    let mut label_of_cluster = vec![NOISE; condensed.len()];
    for (label, &c) in selected.iter().enumerate() {
        label_of_cluster[c] = label as i32;
    }
    let mut labels = vec![NOISE; n];
    for (c, cluster) in condensed.iter().enumerate() {
        // Walk up to the selected ancestor, if any.
        let mut cur = Some(c);
        let mut label = NOISE;
        while let Some(k) = cur {
            if is_selected[k] {
                label = label_of_cluster[k];
                break;
            }
            cur = condensed[k].parent;
        }
        for &(p, _) in &cluster.points {
            labels[p] = label;
        }
    }
    Ok(HdbscanFit {
        assignment: ClusterAssignment {
            labels,
            n_clusters: selected.len(),
        },
        core_distances: core,
        mst,
        condensed,
        stability,
        selected,
    })
}

pub fn hdbscan(points: &ReducedPoints, params: &HdbscanParams) -> Result<ClusterAssignment> {
    hdbscan_fit(points, params).map(|f| f.assignment)
}

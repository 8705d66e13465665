//! Top-N item retrieval by dot product.
//!
//! [`AnnIndex`] is a forest of random-projection trees. Maximum inner product
//! search is reduced to Euclidean nearest neighbours by appending
//! `sqrt(M^2 - |x|^2)` to every item vector (`M` the largest item norm) and
//! `0` to the query, so hyperplane splits on the augmented vectors respect
//! dot-product order. Candidates gathered from the forest are re-scored
//! exactly.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// Forest size that keeps recall@50 near 1 on 1000-item catalogs.
pub const DEFAULT_N_TREES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecEntry {
    pub item_id: String,
    pub score: f64,
    /// 1-based position in the list.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user_id: String,
    pub entries: Vec<RecEntry>,
}

impl RecommendationList {
    fn from_scored(mut scored: Vec<(f64, &str)>, n: usize) -> Self {
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        scored.truncate(n);
        let entries = scored
            .into_iter()
            .enumerate()
            .map(|(k, (score, id))| RecEntry {
                item_id: id.to_owned(),
                score,
                rank: k + 1,
            })
            .collect();
        RecommendationList {
            user_id: String::new(),
            entries,
        }
    }

    pub fn with_user(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = user_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.item_id.as_str())
    }
}

fn check_query(dim: usize, query: &[f32], n: usize) -> Result<()> {
    if query.len() != dim {
        return Err(Error::validation(format!(
            "query has dimension {}, index has {dim}",
            query.len()
        )));
    }
    if n == 0 {
        return Err(Error::validation("n must be at least 1"));
    }
    Ok(())
}

/// Full scan, descending dot product, ties by ascending item id.
pub fn exact_top_n(
    items: &EmbeddingMatrix,
    query: &[f32],
    n: usize,
    exclude: &HashSet<String>,
) -> Result<RecommendationList> {
    check_query(items.dim(), query, n)?;
    let scored = items
        .rows()
        .filter(|(id, _)| !exclude.contains(*id))
        .map(|(id, v)| (linalg::dot(query, v), id))
        .collect();
    Ok(RecommendationList::from_scored(scored, n))
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        normal: Vec<f64>,
        offset: f64,
        left: usize,
        right: usize,
    },
    Leaf(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
    root: usize,
}

/// Random-projection forest over item embeddings.
#[derive(Debug, Clone)]
pub struct AnnIndex {
    items: EmbeddingMatrix,
    trees: Vec<Tree>,
    search_k: Option<usize>,
}

impl AnnIndex {
    pub fn build(items: &EmbeddingMatrix, n_trees: usize, seed: u64) -> Result<Self> {
        Self::build_with_leaf_size(items, n_trees, DEFAULT_LEAF_SIZE, seed)
    }

    pub fn build_with_leaf_size(
        items: &EmbeddingMatrix,
        n_trees: usize,
        leaf_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::validation("cannot index an empty item set"));
        }
        if n_trees == 0 {
            return Err(Error::validation("n_trees must be at least 1"));
        }
        let d = items.dim();
        let norms: Vec<f64> = items.rows().map(|(_, v)| linalg::dot(v, v)).collect();
        let max_sq = norms.iter().copied().fold(0.0, f64::max);
        let mut augmented = Vec::with_capacity(items.len() * (d + 1));
        for ((_, v), sq) in items.rows().zip(&norms) {
            augmented.extend(v.iter().map(|&x| f64::from(x)));
            augmented.push((max_sq - sq).max(0.0).sqrt());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<usize> = (0..items.len()).collect();
        let trees = (0..n_trees)
            .map(|_| {
                let mut nodes = Vec::new();
                let root = grow(
                    &augmented,
                    d + 1,
                    all.clone(),
                    leaf_size.max(1),
                    &mut rng,
                    &mut nodes,
                );
                Tree { nodes, root }
            })
            .collect();
        Ok(AnnIndex {
            items: items.clone(),
            trees,
            search_k: None,
        })
    }

    /// Fixes the candidate budget; `None` means `n_trees * n * 2` per query.
    pub fn with_search_k(mut self, search_k: Option<usize>) -> Self {
        self.search_k = search_k;
        self
    }

    /// Budget large enough to visit every leaf of every tree.
    pub fn exhaustive_search_k(&self) -> usize {
        self.trees.len() * self.items.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn items(&self) -> &EmbeddingMatrix {
        &self.items
    }

    /// Approximate top-`n` items by dot product with `query`.
    pub fn top_n_items(
        &self,
        query: &[f32],
        n: usize,
        exclude: &HashSet<String>,
    ) -> Result<RecommendationList> {
        check_query(self.items.dim(), query, n)?;
        let search_k = self
            .search_k
            .unwrap_or_else(|| self.trees.len().saturating_mul(n).saturating_mul(2));
        let mut q: Vec<f64> = query.iter().map(|&x| f64::from(x)).collect();
        q.push(0.0);

        let mut heap = BinaryHeap::new();
        for (t, tree) in self.trees.iter().enumerate() {
            heap.push(Frontier {
                priority: f64::INFINITY,
                tree: t,
                node: tree.root,
            });
        }
        let mut candidates = Vec::new();
        while candidates.len() < search_k {
            let Some(f) = heap.pop() else { break };
            match &self.trees[f.tree].nodes[f.node] {
                Node::Leaf(members) => candidates.extend_from_slice(members),
                Node::Split {
                    normal,
                    offset,
                    left,
                    right,
                } => {
                    let margin = margin(normal, *offset, &q);
                    heap.push(Frontier {
                        priority: f.priority.min(margin),
                        tree: f.tree,
                        node: *right,
                    });
                    heap.push(Frontier {
                        priority: f.priority.min(-margin),
                        tree: f.tree,
                        node: *left,
                    });
                }
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        let scored = candidates
            .into_iter()
            .map(|k| (self.items.ids()[k].as_str(), self.items.row(k)))
            .filter(|(id, _)| !exclude.contains(*id))
            .map(|(id, v)| (linalg::dot(query, v), id))
            .collect();
        Ok(RecommendationList::from_scored(scored, n))
    }

    #[cfg(test)]
    fn structure(&self) -> &[Tree] {
        &self.trees
    }
}

fn margin(normal: &[f64], offset: f64, x: &[f64]) -> f64 {
    normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset
}

fn grow(
    data: &[f64],
    d: usize,
    members: Vec<usize>,
    leaf_size: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    if members.len() <= leaf_size {
        nodes.push(Node::Leaf(members));
        return nodes.len() - 1;
    }
    let row = |k: usize| &data[k * d..(k + 1) * d];
    let a = members[rng.random_range(0..members.len())];
    let mut b = members[rng.random_range(0..members.len() - 1)];
    if b == a {
        b = members[members.len() - 1];
    }
    let (pa, pb) = (row(a), row(b));
    let normal: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x - y).collect();
    let offset = -normal
        .iter()
        .zip(pa.iter().zip(pb))
        .map(|(n, (x, y))| n * (x + y) * 0.5)
        .sum::<f64>();
    let (mut left, mut right): (Vec<usize>, Vec<usize>) = members
        .iter()
        .partition(|&&k| margin(&normal, offset, row(k)) <= 0.0);
    if left.is_empty() || right.is_empty() {
        // Degenerate split (coincident points): divide at random.
        let mut all = left;
        all.append(&mut right);
        let (l, r): (Vec<usize>, Vec<usize>) = all.into_iter().partition(|_| rng.random::<bool>());
        if l.is_empty() || r.is_empty() {
            let mut all = if l.is_empty() { r } else { l };
            let tail = all.split_off(all.len() / 2);
            left = all;
            right = tail;
        } else {
            left = l;
            right = r;
        }
    }
    let slot = nodes.len();
    nodes.push(Node::Leaf(Vec::new()));
    let l = grow(data, d, left, leaf_size, rng, nodes);
    let r = grow(data, d, right, leaf_size, rng, nodes);
    nodes[slot] = Node::Split {
        normal,
        offset,
        left: l,
        right: r,
    };
    slot
}

struct Frontier {
    priority: f64,
    tree: usize,
    node: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.tree.cmp(&self.tree))
            .then_with(|| other.node.cmp(&self.node))
    }
}

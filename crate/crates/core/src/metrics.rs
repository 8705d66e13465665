//! Offline quality metrics over a population of per-user collections.
//!
//! Ratio metrics are `None` when their denominator is empty. Noise
//! thresholds are strict: a collection exactly at 20% is clean. The
//! comparisons are done on integer counts so this holds exactly.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::assemble::{Collection, UserCollections};
use crate::corpus::{InteractionDataset, MetadataTable};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg;

/// Items below this cosine similarity to the anchor are anomalies.
pub const ANOMALY_COSINE: f64 = 0.2;

/// Minimum number of a user's titles one artist must appear in to flag
/// the user for title overlap.
pub const TITLE_OVERLAP_MIN: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_collections_per_user: f64,
    pub language_noise_pct: Option<f64>,
    pub intra_cluster_noise_pct: Option<f64>,
    pub title_overlap_user_pct: Option<f64>,
    pub artist_relevancy_pct: Option<f64>,
    pub average_rank: Option<f64>,
}

/// More than a fifth, on counts.
fn over_fifth(part: usize, whole: usize) -> bool {
    part * 5 > whole
}

fn pct(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| 100.0 * part as f64 / whole as f64)
}

fn all_collections(results: &[UserCollections]) -> impl Iterator<Item = &Collection> {
    results.iter().flat_map(|r| r.collections.iter())
}

/// Mean collection count per user; 0 for an empty population.
pub fn avg_collections_per_user(results: &[UserCollections]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let total: usize = results.iter().map(|r| r.collections.len()).sum();
    total as f64 / results.len() as f64
}

/// Whether more than 20% of the language-tagged items differ from the modal
/// language. Items without a language are ignored.
pub fn is_language_noisy(collection: &Collection, metadata: &MetadataTable) -> bool {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for item in &collection.items {
        if let Some(lang) = metadata.get(&item.item_id).and_then(|m| m.language()) {
            *counts.entry(lang).or_default() += 1;
        }
    }
    let known: usize = counts.values().sum();
    let modal = counts.values().copied().max().unwrap_or(0);
    over_fifth(known - modal, known)
}

pub fn language_noise_pct(results: &[UserCollections], metadata: &MetadataTable) -> Option<f64> {
    let (mut noisy, mut total) = (0, 0);
    for c in all_collections(results) {
        total += 1;
        noisy += usize::from(is_language_noisy(c, metadata));
    }
    pct(noisy, total)
}

/// Number of items whose cosine similarity to the anchor is below
/// [`ANOMALY_COSINE`].
pub fn count_anomalies(collection: &Collection, items: &EmbeddingMatrix) -> Result<usize> {
    let lookup = |id: &str| items.get(id).ok_or_else(|| Error::lookup("item", id));
    let anchor = lookup(collection.anchor_item_id())?;
    let mut anomalies = 0;
    for item in &collection.items {
        if linalg::cosine(anchor, lookup(&item.item_id)?) < ANOMALY_COSINE {
            anomalies += 1;
        }
    }
    Ok(anomalies)
}

pub fn is_intra_cluster_noisy(collection: &Collection, items: &EmbeddingMatrix) -> Result<bool> {
    Ok(over_fifth(
        count_anomalies(collection, items)?,
        collection.items.len(),
    ))
}

pub fn intra_cluster_noise_pct(
    results: &[UserCollections],
    items: &EmbeddingMatrix,
) -> Result<Option<f64>> {
    let (mut noisy, mut total) = (0, 0);
    for c in all_collections(results) {
        total += 1;
        noisy += usize::from(is_intra_cluster_noisy(c, items)?);
    }
    Ok(pct(noisy, total))
}

/// True when one artist appears in the titles of at least
/// [`TITLE_OVERLAP_MIN`] of the user's collections.
pub fn has_title_overlap(user: &UserCollections) -> bool {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in &user.collections {
        let distinct: HashSet<&str> = c.title_artists.iter().map(String::as_str).collect();
        for a in distinct {
            *counts.entry(a).or_default() += 1;
        }
    }
    counts.values().any(|&n| n >= TITLE_OVERLAP_MIN)
}

/// Share of users (among those with a collection) flagged by
/// [`has_title_overlap`].
pub fn title_overlap_user_pct(results: &[UserCollections]) -> Option<f64> {
    let with: Vec<&UserCollections> = results
        .iter()
        .filter(|r| !r.collections.is_empty())
        .collect();
    pct(
        with.iter().filter(|r| has_title_overlap(r)).count(),
        with.len(),
    )
}

/// Per user, the fraction of collection items sharing an artist with the
/// user's history; averaged over users that have collection items.
pub fn artist_relevancy_pct(
    results: &[UserCollections],
    history: &InteractionDataset,
    metadata: &MetadataTable,
) -> Option<f64> {
    let mut user_artists: HashMap<&str, HashSet<&str>> = HashMap::new();
    for r in history.records() {
        if let Some(m) = metadata.get(&r.item_id) {
            user_artists
                .entry(&r.user_id)
                .or_default()
                .extend(m.artists());
        }
    }
    let empty = HashSet::new();
    let mut sum = 0.0;
    let mut users = 0;
    for r in results {
        let known = user_artists.get(r.user_id.as_str()).unwrap_or(&empty);
        let (mut hit, mut total) = (0usize, 0usize);
        for item in all_collections(std::slice::from_ref(r)).flat_map(|c| &c.items) {
            total += 1;
            let relevant = metadata
                .get(&item.item_id)
                .is_some_and(|m| m.artists().any(|a| known.contains(a)));
            hit += usize::from(relevant);
        }
        if total > 0 {
            sum += hit as f64 / total as f64;
            users += 1;
        }
    }
    (users > 0).then(|| 100.0 * sum / users as f64)
}

/// Mean 1-based recommendation rank of every collection item.
pub fn average_rank(results: &[UserCollections]) -> Option<f64> {
    let (mut sum, mut n) = (0u64, 0u64);
    for item in all_collections(results).flat_map(|c| &c.items) {
        sum += item.rank_in_rec_list as u64;
        n += 1;
    }
    (n > 0).then(|| sum as f64 / n as f64)
}

pub fn metrics_report(
    results: &[UserCollections],
    history: &InteractionDataset,
    metadata: &MetadataTable,
    items: &EmbeddingMatrix,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        avg_collections_per_user: avg_collections_per_user(results),
        language_noise_pct: language_noise_pct(results, metadata),
        intra_cluster_noise_pct: intra_cluster_noise_pct(results, items)?,
        title_overlap_user_pct: title_overlap_user_pct(results),
        artist_relevancy_pct: artist_relevancy_pct(results, history, metadata),
        average_rank: average_rank(results),
    })
}

impl MetricsReport {
    /// Field names and values in display order; `None` is undefined.
    pub fn rows(&self) -> [(&'static str, Option<f64>); 6] {
        [
            (
                "avg_collections_per_user",
                Some(self.avg_collections_per_user),
            ),
            ("language_noise_pct", self.language_noise_pct),
            ("intra_cluster_noise_pct", self.intra_cluster_noise_pct),
            ("title_overlap_user_pct", self.title_overlap_user_pct),
            ("artist_relevancy_pct", self.artist_relevancy_pct),
            ("average_rank", self.average_rank),
        ]
    }
}

/// Per-language item counts across all collections, for diagnostics.
pub fn language_histogram(
    results: &[UserCollections],
    metadata: &MetadataTable,
) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for item in all_collections(results).flat_map(|c| &c.items) {
        let lang = metadata
            .get(&item.item_id)
            .and_then(|m| m.language())
            .unwrap_or("unknown");
        *out.entry(lang.to_owned()).or_default() += 1;
    }
    out
}

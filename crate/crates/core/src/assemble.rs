//! Per-user collection assembly: retrieve, reduce, cluster, then turn each
//! large enough cluster into a titled and rated collection.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{AnnIndex, RecEntry, RecommendationList, DEFAULT_N_TREES};
use crate::cluster::{self, ClusterAssignment, ClusterMethod, HdbscanParams};
use crate::corpus::MetadataTable;
use crate::dimred::{self, DimRedMethod, UmapParams};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::factorize::FactorModel;
use crate::linalg;

/// Title used when no item of a cluster has artist metadata.
pub const FALLBACK_TITLE: &str = "Mix";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub num_rec_items: usize,
    pub num_items_per_cluster: usize,
    pub max_collections: usize,
    pub reduced_dim: usize,
    pub dimred: DimRedMethod,
    pub cluster: ClusterMethod,
    /// `n_components` and `seed` are overridden by `reduced_dim` and the
    /// per-user seed.
    pub umap: UmapParams,
    pub hdbscan: HdbscanParams,
    pub kmeans_k: usize,
    pub kmeans_max_iters: usize,
    /// `None` derives eps from each user's points.
    pub dbscan_eps: Option<f64>,
    pub dbscan_min_pts: usize,
    pub title_artist_count: usize,
    pub n_trees: usize,
    /// Candidate budget per query; `None` uses the index default.
    pub search_k: Option<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            num_rec_items: 1000,
            num_items_per_cluster: 30,
            max_collections: 5,
            reduced_dim: 3,
            dimred: DimRedMethod::Umap,
            cluster: ClusterMethod::Hdbscan,
            umap: UmapParams::default(),
            hdbscan: HdbscanParams::default(),
            kmeans_k: 10,
            kmeans_max_iters: 100,
            dbscan_eps: None,
            dbscan_min_pts: 8,
            title_artist_count: 3,
            n_trees: DEFAULT_N_TREES,
            search_k: None,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_items_per_cluster == 0 {
            return Err(Error::validation(
                "num_items_per_cluster must be at least 1",
            ));
        }
        if self.num_items_per_cluster > self.num_rec_items {
            return Err(Error::validation(format!(
                "num_items_per_cluster ({}) exceeds num_rec_items ({})",
                self.num_items_per_cluster, self.num_rec_items
            )));
        }
        if self.max_collections == 0 {
            return Err(Error::validation("max_collections must be at least 1"));
        }
        if self.reduced_dim == 0 {
            return Err(Error::validation("reduced_dim must be at least 1"));
        }
        if self.n_trees == 0 {
            return Err(Error::validation("n_trees must be at least 1"));
        }
        if self.kmeans_k == 0 {
            return Err(Error::validation("kmeans_k must be at least 1"));
        }
        if self.dbscan_min_pts == 0 {
            return Err(Error::validation("dbscan_min_pts must be at least 1"));
        }
        if let Some(eps) = self.dbscan_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::validation(format!(
                    "dbscan_eps must be positive, got {eps}"
                )));
            }
        }
        self.hdbscan.validate()?;
        let umap = self.umap_params(self.seed);
        if umap.n_neighbors < 2 {
            return Err(Error::validation("UMAP n_neighbors must be at least 2"));
        }
        umap.validate(usize::MAX)
    }

    fn umap_params(&self, seed: u64) -> UmapParams {
        UmapParams {
            n_components: self.reduced_dim,
            seed,
            ..self.umap.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionItem {
    pub item_id: String,
    /// Predicted user-item score.
    pub rating: f64,
    /// 1-based position in the user's recommendation list.
    pub rank_in_rec_list: usize,
}

impl From<&RecEntry> for CollectionItem {
    fn from(e: &RecEntry) -> Self {
        CollectionItem {
            item_id: e.item_id.clone(),
            rating: e.score,
            rank_in_rec_list: e.rank,
        }
    }
}

/// A titled, rated collection. The first item is the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub title: String,
    pub title_artists: Vec<String>,
    pub rating: f64,
    pub items: Vec<CollectionItem>,
}

impl Collection {
    pub fn anchor_item_id(&self) -> &str {
        &self.items[0].item_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCollections {
    pub user_id: String,
    pub collections: Vec<Collection>,
}

fn by_score_then_id(a: &RecEntry, b: &RecEntry) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Anchor (highest score) followed by the `m - 1` members most
/// cosine-similar to it. Ties go to the smaller item id.
pub fn pick_cluster_items(
    group: &[RecEntry],
    items: &EmbeddingMatrix,
    m: usize,
) -> Result<Vec<RecEntry>> {
    if m == 0 || group.len() < m {
        return Err(Error::GroupTooSmall {
            size: group.len(),
            required: m,
        });
    }
    let anchor = group
        .iter()
        .min_by(|a, b| by_score_then_id(a, b))
        .expect("group is non-empty");
    let anchor_vec = items
        .get(&anchor.item_id)
        .ok_or_else(|| Error::lookup("item", anchor.item_id.as_str()))?;
    let mut rest = Vec::with_capacity(group.len() - 1);
    for e in group {
        if e.item_id == anchor.item_id {
            continue;
        }
        let v = items
            .get(&e.item_id)
            .ok_or_else(|| Error::lookup("item", e.item_id.as_str()))?;
        rest.push((linalg::cosine(anchor_vec, v), e));
    }
    rest.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.item_id.cmp(&b.1.item_id))
    });
    let mut out = Vec::with_capacity(m);
    out.push(anchor.clone());
    out.extend(rest.into_iter().take(m - 1).map(|(_, e)| e.clone()));
    Ok(out)
}

/// Mean item rating of a collection.
pub fn cluster_rating(ratings: &[f64]) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::validation("cannot rate an empty cluster"));
    }
    Ok(ratings.iter().sum::<f64>() / ratings.len() as f64)
}

/// The `artist_count` most frequent artists, by count then name.
pub fn title_artists<'a, I>(
    item_ids: I,
    metadata: &MetadataTable,
    artist_count: usize,
) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for id in item_ids {
        if let Some(meta) = metadata.get(id) {
            for artist in meta.artists() {
                *counts.entry(artist).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(artist_count)
        .map(|(a, _)| a.to_owned())
        .collect()
}

/// "A", "A & B", "A, B & C"; [`FALLBACK_TITLE`] when empty.
pub fn format_title(artists: &[String]) -> String {
    match artists {
        [] => FALLBACK_TITLE.to_owned(),
        [only] => only.clone(),
        [head @ .., last] => format!("{} & {last}", head.join(", ")),
    }
}

pub fn cluster_title<'a, I>(item_ids: I, metadata: &MetadataTable, artist_count: usize) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    format_title(&title_artists(item_ids, metadata, artist_count))
}

/// The `n` best collections by rating (ties by anchor id), best first.
pub fn select_top_collections(mut collections: Vec<Collection>, n: usize) -> Vec<Collection> {
    collections.sort_by(|a, b| {
        b.rating
            .total_cmp(&a.rating)
            .then_with(|| a.anchor_item_id().cmp(b.anchor_item_id()))
    });
    collections.truncate(n);
    collections
}

/// Random-projection forest over the model's items, sized by `config`.
pub fn build_index(model: &FactorModel, config: &PipelineConfig) -> Result<AnnIndex> {
    Ok(AnnIndex::build(&model.items, config.n_trees, config.seed)?.with_search_k(config.search_k))
}

/// Mixes the global seed with a user index (splitmix64 finalizer).
pub fn user_seed(seed: u64, user_index: usize) -> u64 {
    let mut z = seed ^ (user_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cluster_points(
    points: &dimred::ReducedPoints,
    config: &PipelineConfig,
    seed: u64,
) -> Result<Option<ClusterAssignment>> {
    let n = points.len();
    let assignment = match config.cluster {
        ClusterMethod::Hdbscan => {
            if n < config.hdbscan.min_cluster_size {
                return Ok(None);
            }
            cluster::hdbscan(points, &config.hdbscan)?
        }
        ClusterMethod::Dbscan => {
            let eps = match config.dbscan_eps {
                Some(eps) => eps,
                None if config.dbscan_min_pts <= n => {
                    cluster::dbscan_auto_eps(points, config.dbscan_min_pts)?
                }
                None => return Ok(None),
            };
            cluster::dbscan(points, eps, config.dbscan_min_pts)?
        }
        ClusterMethod::Kmeans => {
            if config.kmeans_k > n {
                return Ok(None);
            }
            cluster::kmeans(points, config.kmeans_k, seed, config.kmeans_max_iters)?
        }
    };
    Ok(Some(assignment))
}

/// A user's retrieved items and their cluster labels (row `k` of the
/// assignment is entry `k` of the list).
#[derive(Debug, Clone)]
pub struct UserClusters {
    pub recs: RecommendationList,
    pub assignment: ClusterAssignment,
}

/// Retrieval, reduction and clustering for one user. `None` when the
/// retrieved set is too small for the reducer or clusterer.
pub fn cluster_user_items(
    user_id: &str,
    model: &FactorModel,
    index: &AnnIndex,
    config: &PipelineConfig,
) -> Result<Option<UserClusters>> {
    let user_index = model
        .users
        .index_of(user_id)
        .ok_or_else(|| Error::lookup("user", user_id))?;
    let query = model.users.row(user_index);
    let recs = index.top_n_items(query, config.num_rec_items, &HashSet::new())?;
    if recs.len() < config.num_items_per_cluster {
        return Ok(None);
    }
    let seed = user_seed(config.seed, user_index);
    let umap = config.umap_params(seed);
    if config.dimred == DimRedMethod::Umap && umap.n_neighbors >= recs.len() {
        return Ok(None);
    }
    let ids: Vec<&str> = recs.item_ids().collect();
    let vectors = index.items().select(&ids)?;
    let points = dimred::reduce(&vectors, config.dimred, &umap)?;
    Ok(cluster_points(&points, config, seed)?.map(|assignment| UserClusters { recs, assignment }))
}

/// Runs the whole per-user pipeline and returns at most
/// `config.max_collections` collections, best first.
///
/// Users whose retrieved set is too small for the reducer or clusterer get
/// an empty list.
pub fn build_collections_for_user(
    user_id: &str,
    model: &FactorModel,
    index: &AnnIndex,
    metadata: &MetadataTable,
    config: &PipelineConfig,
) -> Result<Vec<Collection>> {
    let Some(UserClusters { recs, assignment }) =
        cluster_user_items(user_id, model, index, config)?
    else {
        return Ok(Vec::new());
    };
    let m = config.num_items_per_cluster;
    let mut collections = Vec::new();
    for members in assignment.groups() {
        if members.len() < m {
            continue;
        }
        let group: Vec<RecEntry> = members.iter().map(|&k| recs.entries[k].clone()).collect();
        let picked = pick_cluster_items(&group, index.items(), m)?;
        let ratings: Vec<f64> = picked.iter().map(|e| e.score).collect();
        let artists = title_artists(
            picked.iter().map(|e| e.item_id.as_str()),
            metadata,
            config.title_artist_count,
        );
        collections.push(Collection {
            title: format_title(&artists),
            title_artists: artists,
            rating: cluster_rating(&ratings)?,
            items: picked.iter().map(CollectionItem::from).collect(),
        });
    }
    Ok(select_top_collections(collections, config.max_collections))
}

/// Builds collections for every listed user in parallel on the current
/// rayon pool. Output order follows `user_ids`.
pub fn build_collections_for_users(
    user_ids: &[String],
    model: &FactorModel,
    index: &AnnIndex,
    metadata: &MetadataTable,
    config: &PipelineConfig,
) -> Result<Vec<UserCollections>> {
    config.validate()?;
    user_ids
        .par_iter()
        .map(|u| {
            Ok(UserCollections {
                user_id: u.clone(),
                collections: build_collections_for_user(u, model, index, metadata, config)?,
            })
        })
        .collect()
}

/// One JSON document per line.
pub fn write_collections_jsonl(results: &[UserCollections], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_collections_jsonl(path: impl AsRef<Path>) -> Result<Vec<UserCollections>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ItemMetadata;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entry(id: &str, score: f64, rank: usize) -> RecEntry {
        RecEntry {
            item_id: id.to_owned(),
            score,
            rank,
        }
    }

    fn collection(anchor: &str, rating: f64) -> Collection {
        Collection {
            title: String::new(),
            title_artists: Vec::new(),
            rating,
            items: vec![CollectionItem {
                item_id: anchor.to_owned(),
                rating,
                rank_in_rec_list: 1,
            }],
        }
    }

    fn meta(rows: &[(&str, &str)]) -> MetadataTable {
        rows.iter()
            .map(|&(id, artist)| ItemMetadata {
                item_id: id.to_owned(),
                artist: artist.to_owned(),
                language: String::new(),
                release_year: None,
            })
            .collect()
    }

    #[test]
    fn whole_group_when_exactly_m() {
        let items = EmbeddingMatrix::from_rows([
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.0, 1.0]),
            ("c", vec![1.0, 1.0]),
        ])
        .unwrap();
        let group = [entry("a", 0.2, 3), entry("b", 0.9, 1), entry("c", 0.5, 2)];
        let out = pick_cluster_items(&group, &items, 3).unwrap();
        let ids: Vec<&str> = out.iter().map(|e| e.item_id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        let one = pick_cluster_items(&group, &items, 1).unwrap();
        assert_eq!(one[0].item_id, "b");
        assert!(matches!(
            pick_cluster_items(&group, &items, 4),
            Err(Error::GroupTooSmall {
                size: 3,
                required: 4
            })
        ));
    }

    #[test]
    fn pick_matches_brute_force_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let rows: Vec<(String, Vec<f32>)> = (0..50)
                .map(|k| {
                    (
                        format!("i{k:02}"),
                        (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            let items = EmbeddingMatrix::from_rows(rows.clone()).unwrap();
            let group: Vec<RecEntry> = rows
                .iter()
                .enumerate()
                .map(|(k, (id, _))| entry(id, (rng.random_range(0..10) as f64) / 10.0, k + 1))
                .collect();
            let out = pick_cluster_items(&group, &items, 30).unwrap();

            let mut by_score = group.clone();
            by_score.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap()
                    .then(a.item_id.cmp(&b.item_id))
            });
            let anchor = &by_score[0];
            let av = items.get(&anchor.item_id).unwrap();
            let mut others: Vec<(f64, &RecEntry)> = group
                .iter()
                .filter(|e| e.item_id != anchor.item_id)
                .map(|e| {
                    let v = items.get(&e.item_id).unwrap();
                    let (mut d, mut na, mut nb) = (0.0, 0.0, 0.0);
                    for (x, y) in av.iter().zip(v) {
                        d += f64::from(*x) * f64::from(*y);
                        na += f64::from(*x) * f64::from(*x);
                        nb += f64::from(*y) * f64::from(*y);
                    }
                    (d / (na.sqrt() * nb.sqrt()), e)
                })
                .collect();
            others.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap()
                    .then(a.1.item_id.cmp(&b.1.item_id))
            });
            let mut expect = vec![anchor.item_id.clone()];
            expect.extend(others.iter().take(29).map(|(_, e)| e.item_id.clone()));
            let got: Vec<String> = out.iter().map(|e| e.item_id.clone()).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn rating_is_mean() {
        assert!((cluster_rating(&[0.8, 0.6, 0.7]).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(cluster_rating(&[0.5]).unwrap(), 0.5);
        assert!(cluster_rating(&[]).is_err());
    }

    #[test]
    fn rating_matches_compensated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for &x in &r {
            let y = x - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        assert!((cluster_rating(&r).unwrap() - sum / 30.0).abs() < 1e-12);
    }

    #[test]
    fn titles() {
        let mut rows = Vec::new();
        for (artist, count) in [("A", 10), ("B", 8), ("C", 5), ("D", 2)] {
            for k in 0..count {
                rows.push((format!("{artist}{k}"), artist));
            }
        }
        let rows_ref: Vec<(&str, &str)> = rows.iter().map(|(i, a)| (i.as_str(), *a)).collect();
        let table = meta(&rows_ref);
        let ids = rows.iter().map(|(i, _)| i.as_str());
        assert_eq!(cluster_title(ids, &table, 3), "A, B & C");

        let table = meta(&[("x", "Solo"), ("y", "")]);
        assert_eq!(cluster_title(["x", "y"], &table, 3), "Solo");
        assert_eq!(cluster_title(["y", "unknown"], &table, 3), FALLBACK_TITLE);
    }

    #[test]
    fn multi_artist_fields_are_split() {
        let table = meta(&[("x", "B;A"), ("y", "A"), ("z", "C;B")]);
        assert_eq!(title_artists(["x", "y", "z"], &table, 2), ["A", "B"]);
        assert_eq!(cluster_title(["x", "y", "z"], &table, 2), "A & B");
    }

    #[test]
    fn top_collections() {
        let cs = vec![
            collection("a", 0.3),
            collection("b", 0.9),
            collection("c", 0.5),
        ];
        let top = select_top_collections(cs.clone(), 2);
        assert_eq!(top.iter().map(|c| c.rating).collect::<Vec<_>>(), [0.9, 0.5]);
        assert_eq!(select_top_collections(cs, 10).len(), 3);
        let tied = select_top_collections(vec![collection("z", 0.5), collection("m", 0.5)], 2);
        assert_eq!(tied[0].anchor_item_id(), "m");
    }

    #[test]
    fn top_collections_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cs: Vec<Collection> = (0..20)
            .map(|k| collection(&format!("i{k:02}"), rng.random_range(0..6) as f64 / 5.0))
            .collect();
        let mut oracle = cs.clone();
        oracle.sort_by(|a, b| {
            b.rating
                .partial_cmp(&a.rating)
                .unwrap()
                .then(a.items[0].item_id.cmp(&b.items[0].item_id))
        });
        oracle.truncate(5);
        assert_eq!(select_top_collections(cs, 5), oracle);
    }

    #[test]
    fn config_invariants() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            num_rec_items: 10,
            num_items_per_cluster: 30,
            ..PipelineConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Validation(_))));
        let bad = PipelineConfig {
            max_collections: 0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let results = vec![
            UserCollections {
                user_id: "u1".into(),
                collections: vec![collection("a", 0.1 + 0.2)],
            },
            UserCollections {
                user_id: "u2".into(),
                collections: Vec::new(),
            },
        ];
        write_collections_jsonl(&results, &path).unwrap();
        assert_eq!(read_collections_jsonl(&path).unwrap(), results);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("\"collections\":[]"));
    }
}

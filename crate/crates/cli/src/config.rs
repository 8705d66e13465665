//! Run configuration: defaults, then a flat `key = value` file, then flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use colrec::{AlsConfig, Error, PipelineConfig, Result, SyntheticConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const METADATA_FILE: &str = "metadata.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.cemb";
pub const COLLECTIONS_FILE: &str = "collections.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const ABLATION_FILE: &str = "ablation.json";

/// Every key accepted in a config file or through `--set`.
pub const KEYS: &[&str] = &[
    "seed",
    "jobs",
    "out",
    "interactions",
    "metadata",
    "embeddings",
    "collections",
    "users",
    "items",
    "themes",
    "themes_per_user",
    "interactions_per_user",
    "noise",
    "dim",
    "regularization",
    "alpha",
    "sweeps",
    "num_rec_items",
    "items_per_collection",
    "max_collections",
    "reduced_dim",
    "dimred",
    "cluster",
    "n_neighbors",
    "min_dist",
    "n_epochs",
    "learning_rate",
    "negative_sample_rate",
    "min_samples",
    "min_cluster_size",
    "kmeans_k",
    "kmeans_max_iters",
    "dbscan_eps",
    "dbscan_min_pts",
    "title_artists",
    "n_trees",
    "search_k",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: SyntheticConfig,
    pub als: AlsConfig,
    pub pipeline: PipelineConfig,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    pub out: PathBuf,
    interactions: Option<PathBuf>,
    metadata: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    collections: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: SyntheticConfig::default(),
            als: AlsConfig::default(),
            pipeline: PipelineConfig::default(),
            seed: 42,
            jobs: 0,
            out: PathBuf::from("."),
            interactions: None,
            metadata: None,
            embeddings: None,
            collections: None,
        }
    }
}

/// The part of a run that determines its outputs.
#[derive(Serialize)]
struct Hashed<'a> {
    corpus: &'a SyntheticConfig,
    als: &'a AlsConfig,
    pipeline: &'a PipelineConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("invalid value `{value}` for `{key}`")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(parse_err(format!("unknown key `{key}`")));
        }
        out.push((key.to_owned(), value.trim().to_owned()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, overlaid by `file` (if any), overlaid by `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut settings: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            settings.extend(parse_config_text(&text, path)?);
        }
        for (key, value) in overrides {
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Validation(format!("unknown config key `{key}`")));
            }
            settings.insert(key.clone(), value.clone());
        }
        let mut config = RunConfig::default();
        for (key, value) in &settings {
            config.set(key, value)?;
        }
        config.corpus.seed = config.seed;
        config.als.seed = config.seed;
        config.pipeline.seed = config.seed;
        config.als.validate()?;
        config.pipeline.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "jobs" => self.jobs = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "interactions" => self.interactions = Some(PathBuf::from(v)),
            "metadata" => self.metadata = Some(PathBuf::from(v)),
            "embeddings" => self.embeddings = Some(PathBuf::from(v)),
            "collections" => self.collections = Some(PathBuf::from(v)),
            "users" => self.corpus.n_users = parse(key, v)?,
            "items" => self.corpus.n_items = parse(key, v)?,
            "themes" => self.corpus.n_themes = parse(key, v)?,
            "themes_per_user" => self.corpus.themes_per_user = parse(key, v)?,
            "interactions_per_user" => self.corpus.interactions_per_user = parse(key, v)?,
            "noise" => self.corpus.noise_fraction = parse(key, v)?,
            "dim" => self.als.dim = parse(key, v)?,
            "regularization" => self.als.regularization = parse(key, v)?,
            "alpha" => self.als.alpha = parse(key, v)?,
            "sweeps" => self.als.sweeps = parse(key, v)?,
            "num_rec_items" => p.num_rec_items = parse(key, v)?,
            "items_per_collection" => p.num_items_per_cluster = parse(key, v)?,
            "max_collections" => p.max_collections = parse(key, v)?,
            "reduced_dim" => p.reduced_dim = parse(key, v)?,
            "dimred" => p.dimred = v.parse()?,
            "cluster" => p.cluster = v.parse()?,
            "n_neighbors" => p.umap.n_neighbors = parse(key, v)?,
            "min_dist" => p.umap.min_dist = parse(key, v)?,
            "n_epochs" => p.umap.n_epochs = parse(key, v)?,
            "learning_rate" => p.umap.learning_rate = parse(key, v)?,
            "negative_sample_rate" => p.umap.negative_sample_rate = parse(key, v)?,
            "min_samples" => p.hdbscan.min_samples = parse(key, v)?,
            "min_cluster_size" => p.hdbscan.min_cluster_size = parse(key, v)?,
            "kmeans_k" => p.kmeans_k = parse(key, v)?,
            "kmeans_max_iters" => p.kmeans_max_iters = parse(key, v)?,
            "dbscan_eps" => p.dbscan_eps = optional(key, v)?,
            "dbscan_min_pts" => p.dbscan_min_pts = parse(key, v)?,
            "title_artists" => p.title_artist_count = parse(key, v)?,
            "n_trees" => p.n_trees = parse(key, v)?,
            "search_k" => p.search_k = optional(key, v)?,
            other => return Err(Error::Validation(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Hex sha256 of everything that affects stage outputs. Paths and the
    /// thread count are excluded.
    pub fn hash(&self) -> String {
        let hashed = Hashed {
            corpus: &self.corpus,
            als: &self.als,
            pipeline: &self.pipeline,
        };
        let bytes = serde_json::to_vec(&hashed).expect("configs serialize");
        hex::encode(Sha256::digest(bytes))
    }

    fn in_out(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out.join(name))
    }

    pub fn interactions_path(&self) -> PathBuf {
        self.in_out(&self.interactions, INTERACTIONS_FILE)
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.in_out(&self.metadata, METADATA_FILE)
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.in_out(&self.embeddings, EMBEDDINGS_FILE)
    }

    pub fn collections_path(&self) -> PathBuf {
        self.in_out(&self.collections, COLLECTIONS_FILE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# corpus\nusers = 50\nseed=9\n\ndimred = pca # ablation arm\n",
        )
        .unwrap();
        let c = RunConfig::resolve(Some(&path), &kv(&[("seed", "11")])).unwrap();
        assert_eq!(c.corpus.n_users, 50);
        assert_eq!(c.pipeline.dimred, colrec::DimRedMethod::Pca);
        assert_eq!(c.seed, 11);
        assert_eq!((c.corpus.seed, c.als.seed, c.pipeline.seed), (11, 11, 11));
    }

    #[test]
    fn bad_lines_name_the_line() {
        let p = Path::new("x.conf");
        let err = parse_config_text("users = 3\nnonsense\n", p).unwrap_err();
        assert!(err.to_string().contains("x.conf:2"), "{err}");
        let err = parse_config_text("colour = red\n", p).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn invalid_values_are_validation_errors() {
        for (k, v) in [
            ("dim", "zero"),
            ("dimred", "tsne"),
            ("items_per_collection", "0"),
            ("dim", "0"),
        ] {
            let err = RunConfig::resolve(None, &kv(&[(k, v)])).unwrap_err();
            assert!(matches!(err, Error::Validation(_)), "{k}={v}: {err}");
        }
    }

    #[test]
    fn hash_tracks_outputs_only() {
        let base = RunConfig::resolve(None, &[]).unwrap();
        let jobs = RunConfig::resolve(None, &kv(&[("jobs", "4"), ("out", "/tmp/x")])).unwrap();
        let seed = RunConfig::resolve(None, &kv(&[("seed", "1")])).unwrap();
        assert_eq!(base.hash(), jobs.hash());
        assert_ne!(base.hash(), seed.hash());
        assert_eq!(base.hash().len(), 64);
    }

    #[test]
    fn optional_keys() {
        let c =
            RunConfig::resolve(None, &kv(&[("dbscan_eps", "0.5"), ("search_k", "auto")])).unwrap();
        assert_eq!(c.pipeline.dbscan_eps, Some(0.5));
        assert_eq!(c.pipeline.search_k, None);
    }
}

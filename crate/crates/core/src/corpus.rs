//! Interaction and metadata tables, their text formats, and a synthetic
//! corpus generator with planted themes.
//!
//! Both file formats are comma-separated with no quoting, one record per
//! line, and lines starting with `#` are comments. Ids therefore cannot
//! contain commas.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separator between several artists inside one metadata `artist` field.
pub const ARTIST_DELIMITER: char = ';';

/// Language tags the generator assigns to themes.
pub const SYNTHETIC_LANGUAGES: [&str; 8] = ["en", "hi", "pa", "ta", "te", "bn", "mr", "gu"];

/// Artists per synthetic theme.
pub const ARTISTS_PER_THEME: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
}

/// Interaction records with dense, first-appearance-ordered user and item
/// indices. Duplicate `(user, item)` pairs are summed into one record.
#[derive(Debug, Clone, Default)]
pub struct InteractionDataset {
    records: Vec<InteractionRecord>,
    pairs: Vec<(usize, usize)>,
    users: Vec<String>,
    items: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
}

impl InteractionDataset {
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = InteractionRecord>,
    {
        let mut ds = InteractionDataset::default();
        let mut pair_lookup: HashMap<(usize, usize), usize> = HashMap::new();
        for rec in records {
            validate_record(&rec)?;
            let u = intern(&mut ds.users, &mut ds.user_lookup, &rec.user_id);
            let i = intern(&mut ds.items, &mut ds.item_lookup, &rec.item_id);
            match pair_lookup.get(&(u, i)) {
                Some(&k) => ds.records[k].rating += rec.rating,
                None => {
                    pair_lookup.insert((u, i), ds.records.len());
                    ds.pairs.push((u, i));
                    ds.records.push(rec);
                }
            }
        }
        Ok(ds)
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    /// Dense `(user, item)` indices aligned with [`records`](Self::records).
    pub fn index_pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).copied()
    }

    /// Per-user lists of `(item index, rating)` in record order.
    pub fn by_user(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for (&(u, i), rec) in self.pairs.iter().zip(&self.records) {
            out[u].push((i, rec.rating));
        }
        out
    }

    /// Per-item lists of `(user index, rating)` in record order.
    pub fn by_item(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.n_items()];
        for (&(u, i), rec) in self.pairs.iter().zip(&self.records) {
            out[i].push((u, rec.rating));
        }
        out
    }

    /// Item ids each user has interacted with, keyed by user id.
    pub fn history(&self) -> HashMap<&str, Vec<&str>> {
        let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
        for rec in &self.records {
            out.entry(rec.user_id.as_str())
                .or_default()
                .push(rec.item_id.as_str());
        }
        out
    }
}

fn intern(ids: &mut Vec<String>, lookup: &mut HashMap<String, usize>, id: &str) -> usize {
    if let Some(&k) = lookup.get(id) {
        return k;
    }
    let k = ids.len();
    ids.push(id.to_owned());
    lookup.insert(id.to_owned(), k);
    k
}

fn validate_record(rec: &InteractionRecord) -> Result<()> {
    if rec.user_id.is_empty() || rec.item_id.is_empty() {
        return Err(Error::validation("interaction ids must be non-empty"));
    }
    if rec.user_id.contains(',') || rec.item_id.contains(',') {
        return Err(Error::validation(format!(
            "ids may not contain commas: ({}, {})",
            rec.user_id, rec.item_id
        )));
    }
    if !rec.rating.is_finite() || rec.rating < 0.0 {
        return Err(Error::validation(format!(
            "rating for ({}, {}) must be a non-negative finite number, got {}",
            rec.user_id, rec.item_id, rec.rating
        )));
    }
    Ok(())
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(n, line)| match line {
            Err(e) => Some(Err(Error::io(path, e))),
            Ok(l) => {
                let t = l.trim_end_matches('\r');
                if t.trim().is_empty() || t.starts_with('#') {
                    None
                } else {
                    Some(Ok((n + 1, t.to_owned())))
                }
            }
        }))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

pub fn load_interactions(path: impl AsRef<Path>) -> Result<InteractionDataset> {
    let path = path.as_ref();
    let mut records = Vec::new();
    for line in data_lines(path)? {
        let (n, line) = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                n,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, n, format!("invalid rating `{}`", fields[2])))?;
        if fields[0].trim().is_empty() || fields[1].trim().is_empty() {
            return Err(parse_error(path, n, "empty id"));
        }
        records.push(InteractionRecord {
            user_id: fields[0].trim().to_owned(),
            item_id: fields[1].trim().to_owned(),
            rating,
        });
    }
    InteractionDataset::from_records(records)
}

pub fn write_interactions(dataset: &InteractionDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "# user_id,item_id,rating")?;
        for r in dataset.records() {
            writeln!(w, "{},{},{}", r.user_id, r.item_id, r.rating)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMetadata {
    pub item_id: String,
    pub artist: String,
    pub language: String,
    pub release_year: Option<i32>,
}

impl ItemMetadata {
    /// Individual artist names, split on [`ARTIST_DELIMITER`], empties dropped.
    pub fn artists(&self) -> impl Iterator<Item = &str> {
        self.artist
            .split(ARTIST_DELIMITER)
            .map(str::trim)
            .filter(|a| !a.is_empty())
    }

    pub fn language(&self) -> Option<&str> {
        let l = self.language.trim();
        (!l.is_empty()).then_some(l)
    }
}

/// Item metadata keyed by item id. Insertion order is kept for writing.
#[derive(Debug, Clone, Default)]
pub struct MetadataTable {
    rows: Vec<ItemMetadata>,
    lookup: HashMap<String, usize>,
}

impl MetadataTable {
    /// Inserts or replaces the row for `meta.item_id`.
    pub fn insert(&mut self, meta: ItemMetadata) {
        match self.lookup.get(&meta.item_id) {
            Some(&k) => self.rows[k] = meta,
            None => {
                self.lookup.insert(meta.item_id.clone(), self.rows.len());
                self.rows.push(meta);
            }
        }
    }

    pub fn get(&self, item_id: &str) -> Option<&ItemMetadata> {
        self.lookup.get(item_id).map(|&k| &self.rows[k])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemMetadata> {
        self.rows.iter()
    }
}

impl FromIterator<ItemMetadata> for MetadataTable {
    fn from_iter<T: IntoIterator<Item = ItemMetadata>>(iter: T) -> Self {
        let mut t = MetadataTable::default();
        for m in iter {
            t.insert(m);
        }
        t
    }
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<MetadataTable> {
    let path = path.as_ref();
    let mut table = MetadataTable::default();
    for line in data_lines(path)? {
        let (n, line) = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_error(
                path,
                n,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let item_id = fields[0].trim();
        if item_id.is_empty() {
            return Err(parse_error(path, n, "empty item id"));
        }
        let year = fields[3].trim();
        let release_year = if year.is_empty() {
            None
        } else {
            let y: i32 = year
                .parse()
                .map_err(|_| parse_error(path, n, format!("invalid year `{year}`")))?;
            if !(1900..=2100).contains(&y) {
                return Err(parse_error(
                    path,
                    n,
                    format!("year {y} outside 1900..=2100"),
                ));
            }
            Some(y)
        };
        table.insert(ItemMetadata {
            item_id: item_id.to_owned(),
            artist: fields[1].trim().to_owned(),
            language: fields[2].trim().to_owned(),
            release_year,
        });
    }
    Ok(table)
}

pub fn write_metadata(table: &MetadataTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "# item_id,artist,language,year")?;
        for m in table.iter() {
            let year = m.release_year.map(|y| y.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", m.item_id, m.artist, m.language, year)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Planted theme labels for a synthetic corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub theme_of_item: BTreeMap<String, usize>,
    pub themes_of_user: BTreeMap<String, BTreeSet<usize>>,
}

impl SyntheticGroundTruth {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_themes: usize,
    pub themes_per_user: usize,
    pub interactions_per_user: usize,
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 200,
            n_items: 2000,
            n_themes: 10,
            themes_per_user: 3,
            interactions_per_user: 300,
            noise_fraction: 0.1,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self;
        if c.n_users == 0 || c.n_items == 0 || c.n_themes == 0 {
            return Err(Error::validation(
                "users, items and themes must all be at least 1",
            ));
        }
        if c.n_themes > c.n_items {
            return Err(Error::validation(format!(
                "{} themes cannot partition {} items",
                c.n_themes, c.n_items
            )));
        }
        if c.themes_per_user == 0 || c.themes_per_user > c.n_themes {
            return Err(Error::validation(format!(
                "themes_per_user must be in 1..={}, got {}",
                c.n_themes, c.themes_per_user
            )));
        }
        if !(0.0..=1.0).contains(&c.noise_fraction) {
            return Err(Error::validation(format!(
                "noise_fraction must be in [0, 1], got {}",
                c.noise_fraction
            )));
        }
        let smallest_theme = c.n_items / c.n_themes;
        let capacity = smallest_theme * c.themes_per_user;
        if c.interactions_per_user == 0 || c.interactions_per_user > capacity {
            return Err(Error::validation(format!(
                "interactions_per_user must be in 1..={capacity} (smallest theme has {smallest_theme} items)"
            )));
        }
        Ok(())
    }

    /// Half-open item index range of `theme`.
    pub fn theme_range(&self, theme: usize) -> std::ops::Range<usize> {
        (theme * self.n_items / self.n_themes)..((theme + 1) * self.n_items / self.n_themes)
    }
}

fn padded_id(prefix: char, k: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("{prefix}{k:0width$}")
}

/// Builds a corpus whose items are split into contiguous theme blocks.
///
/// Each theme has [`ARTISTS_PER_THEME`] artists (assigned round-robin) and
/// one language. A user draws `themes_per_user` themes; each of its distinct
/// interactions comes from the whole catalog with probability
/// `noise_fraction`, otherwise from one of its own themes.
pub fn generate_synthetic(
    config: &SyntheticConfig,
) -> Result<(InteractionDataset, MetadataTable, SyntheticGroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let item_ids: Vec<String> = (0..config.n_items)
        .map(|k| padded_id('i', k, config.n_items))
        .collect();

    let mut truth = SyntheticGroundTruth::default();
    let mut metadata = MetadataTable::default();
    for theme in 0..config.n_themes {
        let language = SYNTHETIC_LANGUAGES[rng.random_range(0..SYNTHETIC_LANGUAGES.len())];
        for (pos, item) in config.theme_range(theme).enumerate() {
            truth.theme_of_item.insert(item_ids[item].clone(), theme);
            metadata.insert(ItemMetadata {
                item_id: item_ids[item].clone(),
                artist: format!("artist-{theme}-{}", pos % ARTISTS_PER_THEME),
                language: language.to_owned(),
                release_year: Some(rng.random_range(1960..=2020)),
            });
        }
    }

    let streams = Exp::<f64>::new(1.0 / 3.0).expect("positive rate");
    let mut records = Vec::with_capacity(config.n_users * config.interactions_per_user);
    for u in 0..config.n_users {
        let user_id = padded_id('u', u, config.n_users);
        let mut themes =
            index::sample(&mut rng, config.n_themes, config.themes_per_user).into_vec();
        themes.sort_unstable();
        let mut seen = HashSet::with_capacity(config.interactions_per_user);
        while seen.len() < config.interactions_per_user {
            let from_noise = rng.random::<f64>() < config.noise_fraction;
            let item = loop {
                let candidate = if from_noise {
                    rng.random_range(0..config.n_items)
                } else {
                    let theme = themes[rng.random_range(0..themes.len())];
                    rng.random_range(config.theme_range(theme))
                };
                if !seen.contains(&candidate) {
                    break candidate;
                }
            };
            seen.insert(item);
            let rating = 1.0 + streams.sample(&mut rng).floor();
            records.push(InteractionRecord {
                user_id: user_id.clone(),
                item_id: item_ids[item].clone(),
                rating,
            });
        }
        truth
            .themes_of_user
            .insert(user_id, themes.into_iter().collect());
    }
    let dataset = InteractionDataset::from_records(records)?;
    Ok((dataset, metadata, truth))
}

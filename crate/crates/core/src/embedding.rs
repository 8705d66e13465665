use std::collections::HashMap;

use crate::error::{Error, Result};

/// Row-major matrix of `f32` vectors, one row per id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be at least 1"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::validation(format!(
                "{} ids of dimension {dim} need {} values, got {}",
                ids.len(),
                ids.len() * dim,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite embedding value {bad}"
            )));
        }
        let mut lookup = HashMap::with_capacity(ids.len());
        for (k, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), k).is_some() {
                return Err(Error::validation(format!("duplicate embedding id `{id}`")));
            }
        }
        Ok(EmbeddingMatrix {
            ids,
            dim,
            data,
            lookup,
        })
    }

    /// Builds a matrix from `(id, vector)` rows; all vectors must share a length.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (id, v) in rows {
            let id = id.into();
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::validation(format!(
                        "row `{id}` has dimension {}, expected {d}",
                        v.len()
                    )))
                }
                _ => {}
            }
            ids.push(id);
            data.extend_from_slice(&v);
        }
        let dim = dim.ok_or_else(|| Error::validation("no embedding rows"))?;
        Self::new(ids, dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index_of(id).map(|k| self.row(k))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Copies the named rows, in order, into a new matrix.
    pub fn select(&self, ids: &[&str]) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            let row = self.get(id).ok_or_else(|| Error::lookup("item", *id))?;
            data.extend_from_slice(row);
        }
        Self::new(ids.iter().map(|s| s.to_string()).collect(), self.dim, data)
    }

    /// Rows widened to `f64`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }
}

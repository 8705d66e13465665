//! Implicit-feedback alternating least squares.
//!
//! Ratings are treated as consumption strength: every observed pair gets
//! preference `p = 1` (when the rating is positive) and confidence
//! `c = 1 + alpha * r`; every unobserved pair has `p = 0`, `c = 1`. Each
//! half-sweep solves all users (then all items) in closed form, which makes
//! the regularized objective non-increasing.

mod format;

pub use format::{export_embeddings, import_embeddings, read_embeddings, write_embeddings};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::InteractionDataset;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    pub dim: usize,
    pub regularization: f64,
    pub alpha: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            dim: 100,
            regularization: 0.1,
            alpha: 40.0,
            sweeps: 15,
            seed: 42,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("ALS dim must be at least 1"));
        }
        if self.sweeps == 0 {
            return Err(Error::validation("ALS sweeps must be at least 1"));
        }
        if !(self.regularization > 0.0 && self.regularization.is_finite()) {
            return Err(Error::validation(format!(
                "ALS regularization must be positive, got {}",
                self.regularization
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation(format!(
                "ALS alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// User and item embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub users: EmbeddingMatrix,
    pub items: EmbeddingMatrix,
}

impl FactorModel {
    pub fn new(users: EmbeddingMatrix, items: EmbeddingMatrix) -> Result<Self> {
        if users.dim() != items.dim() {
            return Err(Error::validation(format!(
                "user dim {} differs from item dim {}",
                users.dim(),
                items.dim()
            )));
        }
        Ok(FactorModel { users, items })
    }

    pub fn dim(&self) -> usize {
        self.items.dim()
    }

    pub fn user(&self, id: &str) -> Result<&[f32]> {
        self.users.get(id).ok_or_else(|| Error::lookup("user", id))
    }

    pub fn item(&self, id: &str) -> Result<&[f32]> {
        self.items.get(id).ok_or_else(|| Error::lookup("item", id))
    }
}

/// Predicted rating: the dot product of the user and item embeddings.
pub fn predict_rating(model: &FactorModel, user_id: &str, item_id: &str) -> Result<f64> {
    Ok(linalg::dot(model.user(user_id)?, model.item(item_id)?))
}

/// Regularized implicit-feedback loss over the full user x item grid of
/// `dataset`: `sum c_ui (p_ui - u.i)^2 + reg * (|U|^2 + |I|^2)`.
pub fn als_objective(
    model: &FactorModel,
    dataset: &InteractionDataset,
    config: &AlsConfig,
) -> Result<f64> {
    let d = model.dim();
    if d != config.dim {
        return Err(Error::validation(format!(
            "model dim {d} does not match config dim {}",
            config.dim
        )));
    }
    let gather = |m: &EmbeddingMatrix, ids: &[String], kind| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ids.len() * d);
        for id in ids {
            let row = m.get(id).ok_or_else(|| Error::lookup(kind, id.as_str()))?;
            out.extend(row.iter().map(|&v| f64::from(v)));
        }
        Ok(out)
    };
    let users = gather(&model.users, dataset.user_ids(), "user")?;
    let items = gather(&model.items, dataset.item_ids(), "item")?;
    Ok(objective(&users, &items, d, dataset, config))
}

fn objective(
    users: &[f64],
    items: &[f64],
    d: usize,
    dataset: &InteractionDataset,
    config: &AlsConfig,
) -> f64 {
    // Full-grid squared predictions via the item Gram matrix, then correct
    // the observed cells.
    let gram = gram(items, d);
    let mut total = 0.0;
    for u in users.chunks_exact(d) {
        let mut s = 0.0;
        for a in 0..d {
            let row: f64 = (0..d).map(|b| gram[a * d + b] * u[b]).sum();
            s += u[a] * row;
        }
        total += s;
    }
    for (&(u, i), rec) in dataset.index_pairs().iter().zip(dataset.records()) {
        let x: f64 = users[u * d..(u + 1) * d]
            .iter()
            .zip(&items[i * d..(i + 1) * d])
            .map(|(a, b)| a * b)
            .sum();
        let (p, c) = preference_confidence(rec.rating, config.alpha);
        total += c * (p - x) * (p - x) - x * x;
    }
    let norms: f64 = users.iter().chain(items).map(|v| v * v).sum();
    total + config.regularization * norms
}

fn preference_confidence(rating: f64, alpha: f64) -> (f64, f64) {
    let p = if rating > 0.0 { 1.0 } else { 0.0 };
    (p, 1.0 + alpha * rating)
}

fn gram(rows: &[f64], d: usize) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for r in rows.chunks_exact(d) {
        for a in 0..d {
            let ra = r[a];
            if ra == 0.0 {
                continue;
            }
            for b in a..d {
                g[a * d + b] += ra * r[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            g[a * d + b] = g[b * d + a];
        }
    }
    g
}

/// Stepwise ALS solver. Factors are kept in `f64` while training and
/// narrowed to `f32` by [`AlsTrainer::model`].
pub struct AlsTrainer<'a> {
    dataset: &'a InteractionDataset,
    config: AlsConfig,
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
    users: Vec<f64>,
    items: Vec<f64>,
    sweeps_done: usize,
}

impl<'a> AlsTrainer<'a> {
    pub fn new(dataset: &'a InteractionDataset, config: &AlsConfig) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::validation("cannot train on an empty dataset"));
        }
        let d = config.dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = |n: usize| -> Vec<f64> {
            (0..n * d)
                .map(|_| rng.random_range(-bound..=bound))
                .collect()
        };
        let users = init(dataset.n_users());
        let items = init(dataset.n_items());
        Ok(AlsTrainer {
            dataset,
            config: config.clone(),
            by_user: dataset.by_user(),
            by_item: dataset.by_item(),
            users,
            items,
            sweeps_done: 0,
        })
    }

    /// One full sweep: all users against fixed items, then all items
    /// against fixed users.
    pub fn sweep(&mut self) {
        let d = self.config.dim;
        solve_side(&mut self.users, &self.items, &self.by_user, d, &self.config);
        solve_side(&mut self.items, &self.users, &self.by_item, d, &self.config);
        self.sweeps_done += 1;
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    pub fn objective(&self) -> f64 {
        objective(
            &self.users,
            &self.items,
            self.config.dim,
            self.dataset,
            &self.config,
        )
    }

    pub fn model(&self) -> FactorModel {
        let d = self.config.dim;
        let narrow = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let users = EmbeddingMatrix::new(self.dataset.user_ids().to_vec(), d, narrow(&self.users))
            .expect("user factors are finite");
        let items = EmbeddingMatrix::new(self.dataset.item_ids().to_vec(), d, narrow(&self.items))
            .expect("item factors are finite");
        FactorModel { users, items }
    }
}

fn solve_side(
    target: &mut [f64],
    fixed: &[f64],
    observations: &[Vec<(usize, f64)>],
    d: usize,
    config: &AlsConfig,
) {
    let g = gram(fixed, d);
    target
        .par_chunks_mut(d)
        .zip(observations.par_iter())
        .for_each(|(row, obs)| {
            let mut a = g.clone();
            let mut b = vec![0.0; d];
            for &(j, r) in obs {
                let y = &fixed[j * d..(j + 1) * d];
                let (p, c) = preference_confidence(r, config.alpha);
                let w = c - 1.0;
                if w != 0.0 {
                    for s in 0..d {
                        let ws = w * y[s];
                        for t in 0..d {
                            a[s * d + t] += ws * y[t];
                        }
                    }
                }
                if p != 0.0 {
                    for s in 0..d {
                        b[s] += c * p * y[s];
                    }
                }
            }
            for s in 0..d {
                a[s * d + s] += config.regularization;
            }
            let x = linalg::cholesky_solve(&a, &b, d)
                .expect("regularized normal equations are positive definite");
            row.copy_from_slice(&x);
        });
}

/// Trains a model, returning it with the objective before training and after
/// every sweep.
pub fn train_als_with_history(
    dataset: &InteractionDataset,
    config: &AlsConfig,
) -> Result<(FactorModel, Vec<f64>)> {
    let mut trainer = AlsTrainer::new(dataset, config)?;
    let mut history = vec![trainer.objective()];
    for _ in 0..config.sweeps {
        trainer.sweep();
        history.push(trainer.objective());
    }
    Ok((trainer.model(), history))
}

pub fn train_als(dataset: &InteractionDataset, config: &AlsConfig) -> Result<FactorModel> {
    train_als_with_history(dataset, config).map(|(m, _)| m)
}

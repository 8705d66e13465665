use std::collections::HashSet;
use std::hint::black_box;

use colrec::cluster::hdbscan;
use colrec::corpus::generate_synthetic;
use colrec::dimred::umap_fit_transform;
use colrec::factorize::{train_als, AlsTrainer};
use colrec::{
    AlsConfig, AnnIndex, EmbeddingMatrix, HdbscanParams, ReducedPoints, SyntheticConfig, UmapParams,
};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> SyntheticConfig {
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

fn random_matrix(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingMatrix::from_rows((0..n).map(|k| {
        (
            format!("i{k:05}"),
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }))
    .unwrap()
}

fn als_sweep(c: &mut Criterion) {
    let (ds, _, _) = generate_synthetic(&corpus()).unwrap();
    let config = AlsConfig::default();
    c.bench_function("als sweep 200x2000 d100", |b| {
        let mut trainer = AlsTrainer::new(&ds, &config).unwrap();
        b.iter(|| trainer.sweep())
    });
}

fn ann_query(c: &mut Criterion) {
    let items = random_matrix(5000, 100, 1);
    let index = AnnIndex::build(&items, colrec::ann::DEFAULT_N_TREES, 1).unwrap();
    let query: Vec<f32> = items.row(0).to_vec();
    let none = HashSet::new();
    c.bench_function("ann top 1000 of 5000", |b| {
        b.iter(|| index.top_n_items(black_box(&query), 1000, &none).unwrap())
    });
}

fn user_stages(c: &mut Criterion) {
    let (ds, _, _) = generate_synthetic(&corpus()).unwrap();
    let model = train_als(
        &ds,
        &AlsConfig {
            dim: 32,
            ..AlsConfig::default()
        },
    )
    .unwrap();
    let mut group = c.benchmark_group("per user");
    group.sample_size(10);
    let recs = EmbeddingMatrix::from_rows(
        model
            .items
            .rows()
            .take(1000)
            .map(|(id, v)| (id.to_owned(), v.to_vec())),
    )
    .unwrap();
    group.bench_function("umap 1000 points", |b| {
        b.iter(|| umap_fit_transform(&recs, &UmapParams::default()).unwrap())
    });
    let reduced = umap_fit_transform(&recs, &UmapParams::default()).unwrap();
    group.bench_function("hdbscan 1000 points", |b| {
        b.iter(|| hdbscan(black_box(&reduced), &HdbscanParams::default()).unwrap())
    });
    let raw = ReducedPoints::from_coords(32, recs.to_f64()).unwrap();
    group.bench_function("hdbscan 1000 points unreduced", |b| {
        b.iter(|| hdbscan(black_box(&raw), &HdbscanParams::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, als_sweep, ann_query, user_stages);
criterion_main!(benches);

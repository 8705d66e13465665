use std::collections::BTreeSet;

use colrec::assemble::{pick_cluster_items, select_top_collections};
use colrec::cluster::hdbscan_fit;
use colrec::cluster::NOISE;
use colrec::corpus::InteractionRecord;
use colrec::dimred::trustworthiness;
use colrec::dimred::umap_fit;
use colrec::factorize::train_als_with_history;
use colrec::{
    AlsConfig, Collection, CollectionItem, EmbeddingMatrix, HdbscanParams, InteractionDataset,
    RecEntry, ReducedPoints, UmapParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_corpus(seed: u64, users: usize, items: usize) -> InteractionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for u in 0..users {
        let picked: BTreeSet<usize> = (0..rng.random_range(1..=items))
            .map(|_| rng.random_range(0..items))
            .collect();
        for i in picked {
            records.push(InteractionRecord {
                user_id: format!("u{u}"),
                item_id: format!("i{i}"),
                rating: rng.random_range(1..=5) as f64,
            });
        }
    }
    InteractionDataset::from_records(records).unwrap()
}

fn blobs(seed: u64, n: usize, centres: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .flat_map(|i| {
            let c = (i % centres) as f64 * 10.0;
            (0..dim)
                .map(|_| c + rng.random_range(-1.0..1.0))
                .collect::<Vec<_>>()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn als_objective_never_increases(
        seed in 0u64..1000,
        users in 2usize..12,
        items in 2usize..15,
        dim in 1usize..6,
        alpha in 0.0f64..50.0,
    ) {
        let ds = random_corpus(seed, users, items);
        let config = AlsConfig { dim, alpha, sweeps: 6, seed, ..AlsConfig::default() };
        let (model, history) = train_als_with_history(&ds, &config).unwrap();
        for w in history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "{} -> {}", w[0], w[1]);
        }
        prop_assert_eq!(model.users.len(), ds.n_users());
        prop_assert_eq!(model.items.len(), ds.n_items());
    }

    #[test]
    fn hdbscan_labels_are_consistent(
        seed in 0u64..1000,
        n in 12usize..80,
        centres in 1usize..4,
        mcs in 2usize..10,
        ms in 1usize..8,
    ) {
        let points = ReducedPoints::from_coords(2, blobs(seed, n, centres, 2)).unwrap();
        let params = HdbscanParams { min_samples: ms, min_cluster_size: mcs };
        let fit = hdbscan_fit(&points, &params).unwrap();
        prop_assert!(fit.assignment.is_valid());
        prop_assert_eq!(fit.mst.len(), n - 1);
        for g in fit.assignment.groups() {
            prop_assert!(g.len() >= mcs);
        }
        let clustered = fit.assignment.labels.iter().filter(|&&l| l != NOISE).count();
        prop_assert_eq!(clustered + fit.assignment.n_noise(), n);
    }

    #[test]
    fn umap_graph_is_a_symmetric_fuzzy_set(seed in 0u64..1000, n in 20usize..50, k in 2usize..10) {
        let data = blobs(seed, n, 2, 4);
        let rows = (0..n).map(|i| (format!("p{i}"), data[i * 4..i * 4 + 4].iter().map(|&x| x as f32).collect()));
        let m = EmbeddingMatrix::from_rows(rows).unwrap();
        let params = UmapParams { n_neighbors: k, n_components: 2, n_epochs: 20, seed, ..UmapParams::default() };
        let fit = umap_fit(&m, &params).unwrap();
        for i in 0..n {
            prop_assert!(fit.graph.weight(i, i) == 0.0);
            for &(j, w) in &fit.graph.rows[i] {
                prop_assert!(w > 0.0 && w <= 1.0);
                prop_assert_eq!(w, fit.graph.weight(j, i));
            }
        }
        prop_assert_eq!(fit.embedding.len(), n);
        prop_assert!((0..n).all(|i| fit.embedding.row(i).iter().all(|v| v.is_finite())));
    }

    #[test]
    fn trustworthiness_is_bounded(seed in 0u64..1000, n in 10usize..40, k in 1usize..4) {
        let data = blobs(seed, n, 2, 5);
        let projected: Vec<f64> = data.chunks(5).flat_map(|r| r[..2].to_vec()).collect();
        let t = trustworthiness(&data, 5, &projected, 2, k);
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert!((trustworthiness(&data, 5, &data, 5, k) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn picked_items_are_anchor_plus_nearest(seed in 0u64..1000, size in 1usize..30, m in 1usize..30) {
        prop_assume!(m <= size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items = EmbeddingMatrix::from_rows(
            (0..size).map(|i| (format!("i{i:02}"), (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())),
        ).unwrap();
        let group: Vec<RecEntry> = (0..size)
            .map(|i| RecEntry { item_id: format!("i{i:02}"), score: rng.random_range(0.0..1.0), rank: i + 1 })
            .collect();
        let picked = pick_cluster_items(&group, &items, m).unwrap();
        prop_assert_eq!(picked.len(), m);
        let best = group.iter().map(|e| e.score).fold(f64::MIN, f64::max);
        prop_assert_eq!(picked[0].score, best);
        let distinct: BTreeSet<&str> = picked.iter().map(|e| e.item_id.as_str()).collect();
        prop_assert_eq!(distinct.len(), m);
    }

    #[test]
    fn top_collections_are_the_best_rated(ratings in proptest::collection::vec(0.0f64..1.0, 0..20), n in 0usize..8) {
        let cs: Vec<Collection> = ratings
            .iter()
            .enumerate()
            .map(|(k, &r)| Collection {
                title: String::new(),
                title_artists: Vec::new(),
                rating: r,
                items: vec![CollectionItem { item_id: format!("a{k:02}"), rating: r, rank_in_rec_list: k + 1 }],
            })
            .collect();
        let top = select_top_collections(cs, n);
        prop_assert_eq!(top.len(), n.min(ratings.len()));
        let mut sorted = ratings.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (c, r) in top.iter().zip(&sorted) {
            prop_assert_eq!(c.rating, *r);
        }
    }
}

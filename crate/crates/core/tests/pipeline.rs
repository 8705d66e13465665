use std::collections::{BTreeMap, HashSet};

use colrec::assemble::{build_index, cluster_user_items};
use colrec::cluster::NOISE;
use colrec::corpus::{generate_synthetic, SyntheticConfig, SyntheticGroundTruth};
use colrec::factorize::train_als;
use colrec::metrics::metrics_report;
use colrec::{
    build_collections_for_user, build_collections_for_users, AlsConfig, Collection, FactorModel,
    MetadataTable, PipelineConfig,
};

struct Fixture {
    model: FactorModel,
    metadata: MetadataTable,
    truth: SyntheticGroundTruth,
    dataset: colrec::InteractionDataset,
}

fn fixture(corpus: SyntheticConfig) -> Fixture {
    fixture_with(corpus, 0.1)
}

fn fixture_with(corpus: SyntheticConfig, regularization: f64) -> Fixture {
    let (dataset, metadata, truth) = generate_synthetic(&corpus).unwrap();
    let als = AlsConfig {
        dim: 32,
        regularization,
        ..AlsConfig::default()
    };
    let model = train_als(&dataset, &als).unwrap();
    Fixture {
        model,
        metadata,
        truth,
        dataset,
    }
}

fn dominant_share(c: &Collection, truth: &SyntheticGroundTruth) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for item in &c.items {
        *counts
            .entry(truth.theme_of_item[&item.item_id])
            .or_default() += 1;
    }
    *counts.values().max().unwrap() as f64 / c.items.len() as f64
}

fn check_invariants(cs: &[Collection], config: &PipelineConfig, model: &FactorModel) {
    assert!(cs.len() <= config.max_collections);
    for w in cs.windows(2) {
        assert!(w[0].rating >= w[1].rating);
    }
    for c in cs {
        assert_eq!(c.items.len(), config.num_items_per_cluster);
        let distinct: HashSet<&str> = c.items.iter().map(|i| i.item_id.as_str()).collect();
        assert_eq!(distinct.len(), c.items.len());
        let mean = c.items.iter().map(|i| i.rating).sum::<f64>() / c.items.len() as f64;
        assert!((c.rating - mean).abs() <= 1e-12);
        assert!(c.items.iter().all(|i| i.rating <= c.items[0].rating));
        assert!(c
            .items
            .iter()
            .all(|i| (1..=config.num_rec_items).contains(&i.rank_in_rec_list)));
        assert!(c
            .items
            .iter()
            .all(|i| model.items.get(&i.item_id).is_some()));
    }
}

fn single_theme_fixture() -> Fixture {
    // Strong regularization keeps every top-1000 list inside the theme.
    fixture_with(
        SyntheticConfig {
            n_users: 80,
            n_items: 2000,
            n_themes: 2,
            themes_per_user: 1,
            interactions_per_user: 300,
            noise_fraction: 0.0,
            seed: 3,
        },
        100.0,
    )
}

#[test]
fn single_theme_user_gets_one_collection_without_reduction() {
    let f = single_theme_fixture();
    let config = PipelineConfig {
        dimred: colrec::DimRedMethod::None,
        ..PipelineConfig::default()
    };
    let index = build_index(&f.model, &config).unwrap();
    for user in f.model.users.ids().iter().take(4) {
        let theme = *f.truth.themes_of_user[user].iter().next().unwrap();
        let recs = index
            .top_n_items(f.model.users.get(user).unwrap(), 1000, &HashSet::new())
            .unwrap();
        let in_theme = recs
            .item_ids()
            .filter(|id| f.truth.theme_of_item[*id] == theme)
            .count();
        assert_eq!(in_theme, 1000, "{user} retrieved outside its theme");
        let cs = build_collections_for_user(user, &f.model, &index, &f.metadata, &config).unwrap();
        assert_eq!(cs.len(), 1, "{user}");
        check_invariants(&cs, &config, &f.model);
    }
}

#[test]
fn single_theme_user_under_umap_stays_in_theme() {
    // UMAP has no global scale, so one uniform theme is laid out as several
    // clumps; every resulting collection still lies inside the theme.
    let f = single_theme_fixture();
    let config = PipelineConfig::default();
    let index = build_index(&f.model, &config).unwrap();
    for user in f.model.users.ids().iter().take(2) {
        let theme = *f.truth.themes_of_user[user].iter().next().unwrap();
        let cs = build_collections_for_user(user, &f.model, &index, &f.metadata, &config).unwrap();
        assert!(!cs.is_empty());
        for c in &cs {
            assert!(c
                .items
                .iter()
                .all(|i| f.truth.theme_of_item[&i.item_id] == theme));
        }
        check_invariants(&cs, &config, &f.model);
    }
}

#[test]
fn five_theme_users_get_pure_collections() {
    let f = fixture(SyntheticConfig {
        n_users: 200,
        n_items: 2000,
        n_themes: 10,
        themes_per_user: 5,
        interactions_per_user: 300,
        noise_fraction: 0.0,
        seed: 11,
    });
    let config = PipelineConfig::default();
    let index = build_index(&f.model, &config).unwrap();
    for user in f.model.users.ids().iter().take(4) {
        let cs = build_collections_for_user(user, &f.model, &index, &f.metadata, &config).unwrap();
        assert!(
            (3..=5).contains(&cs.len()),
            "{user}: {} collections",
            cs.len()
        );
        for c in &cs {
            assert!(
                dominant_share(c, &f.truth) >= 0.8,
                "{user}: impure `{}`",
                c.title
            );
        }
        check_invariants(&cs, &config, &f.model);
    }
}

#[test]
fn noise_points_never_reach_collections() {
    let f = fixture(SyntheticConfig {
        n_users: 120,
        n_items: 1500,
        n_themes: 6,
        themes_per_user: 2,
        interactions_per_user: 150,
        noise_fraction: 0.1,
        seed: 5,
    });
    let config = PipelineConfig {
        num_rec_items: 600,
        ..PipelineConfig::default()
    };
    let index = build_index(&f.model, &config).unwrap();
    let mut saw_noise = false;
    for user in f.model.users.ids().iter().take(5) {
        let clusters = cluster_user_items(user, &f.model, &index, &config)
            .unwrap()
            .unwrap();
        let noise: HashSet<&str> = clusters
            .recs
            .entries
            .iter()
            .zip(&clusters.assignment.labels)
            .filter(|(_, &l)| l == NOISE)
            .map(|(e, _)| e.item_id.as_str())
            .collect();
        saw_noise |= !noise.is_empty();
        let cs = build_collections_for_user(user, &f.model, &index, &f.metadata, &config).unwrap();
        for c in &cs {
            assert!(c.items.iter().all(|i| !noise.contains(i.item_id.as_str())));
        }
        check_invariants(&cs, &config, &f.model);
    }
    assert!(saw_noise, "fixture never produced noise points");
}

#[test]
fn pipeline_is_deterministic_and_order_stable() {
    let f = fixture(SyntheticConfig {
        n_users: 40,
        n_items: 800,
        n_themes: 4,
        themes_per_user: 2,
        interactions_per_user: 100,
        noise_fraction: 0.1,
        seed: 8,
    });
    let config = PipelineConfig {
        num_rec_items: 300,
        ..PipelineConfig::default()
    };
    let index = build_index(&f.model, &config).unwrap();
    let users: Vec<String> = f.model.users.ids()[..12].to_vec();
    let a = build_collections_for_users(&users, &f.model, &index, &f.metadata, &config).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let b = pool
        .install(|| build_collections_for_users(&users, &f.model, &index, &f.metadata, &config))
        .unwrap();
    assert_eq!(a, b);
    assert_eq!(
        a.iter().map(|u| u.user_id.clone()).collect::<Vec<_>>(),
        users
    );
    let report = metrics_report(&a, &f.dataset, &f.metadata, &f.model.items).unwrap();
    let again = metrics_report(&b, &f.dataset, &f.metadata, &f.model.items).unwrap();
    assert_eq!(report, again);
}

#[test]
fn unknown_user_is_a_lookup_error() {
    let f = fixture(SyntheticConfig {
        n_users: 10,
        n_items: 100,
        n_themes: 2,
        themes_per_user: 1,
        interactions_per_user: 10,
        noise_fraction: 0.0,
        seed: 1,
    });
    let config = PipelineConfig::default();
    let index = build_index(&f.model, &config).unwrap();
    let err =
        build_collections_for_user("nobody", &f.model, &index, &f.metadata, &config).unwrap_err();
    assert!(err.to_string().contains("nobody"));
    // 100 items cannot feed a 1000-item list, but 30-item groups are still
    // possible; small catalogs must not error.
    let user = &f.model.users.ids()[0];
    assert!(build_collections_for_user(user, &f.model, &index, &f.metadata, &config).is_ok());
}

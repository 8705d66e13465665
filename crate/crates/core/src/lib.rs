//! Automatic per-user collection recommendation.
//!
//! Users and items are embedded by implicit-feedback ALS. For each user the
//! top items are retrieved from a random-projection forest, reduced to a few
//! dimensions (UMAP, PCA or pass-through), clustered (HDBSCAN, DBSCAN or
//! k-means) and every sufficiently large cluster becomes a titled, rated
//! collection. The [`metrics`] module scores a population of such results.

pub mod ann;
pub mod assemble;
pub mod cluster;
pub mod corpus;
pub mod dimred;
pub mod embedding;
mod error;
pub mod factorize;
pub mod linalg;
pub mod metrics;

pub use ann::{exact_top_n, AnnIndex, RecEntry, RecommendationList};
pub use assemble::{
    build_collections_for_user, build_collections_for_users, Collection, CollectionItem,
    PipelineConfig, UserCollections,
};
pub use cluster::{ClusterAssignment, ClusterMethod, HdbscanParams};
pub use corpus::{
    InteractionDataset, InteractionRecord, ItemMetadata, MetadataTable, SyntheticConfig,
    SyntheticGroundTruth,
};
pub use dimred::{DimRedMethod, ReducedPoints, UmapParams};
pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use factorize::{AlsConfig, FactorModel};
pub use metrics::MetricsReport;

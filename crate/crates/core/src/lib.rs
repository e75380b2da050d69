//! Within-basket recommendation engine.
//!
//! Trains dual-item and user embeddings from basket co-purchase triples
//! with noise-contrastive estimation, reduces personalized scoring to
//! maximum-inner-product search over concatenated catalog vectors, and
//! serves top-k recommendations through exact or approximate retrieval.
//!
//! The pipeline, end to end:
//!
//! 1. [`corpus`] — ingest `user_id,basket_id,item_id` CSV, intern ids,
//!    split train/test, count frequencies.
//! 2. [`triples`] — draw (user, item, item) training triples and
//!    log-uniform negative samples.
//! 3. [`model`] — train the three embedding matrices.
//! 4. [`index`] — build per-item catalog vectors and retrieve top-k by
//!    inner product, exactly or via a small-world graph.
//! 5. [`recommend`] — anchor selection, per-anchor retrieval,
//!    aggregation, post-processing.
//! 6. [`eval`] — Recall@K / NDCG@K harness, baselines, latency tables.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod linalg;
pub mod model;
pub mod recommend;
pub mod synth;
pub mod triples;

pub use corpus::{
    item_frequencies, load_baskets, split_holdout, user_frequencies, Basket, FrequencyTable,
    TransactionLog, Vocabulary,
};
pub use error::{Error, Result};
pub use eval::{
    benchmark_latency, evaluate, make_eval_split, ndcg_at_k, recall_at_k, EvalSplits,
    LatencyTable, MetricsReport, Strategy,
};
pub use index::{
    make_query_vector, make_query_vector_anonymous, make_query_vector_asymmetric, CatalogIndex,
    CatalogLayout, ExcludeSet, IndexBackend, IndexParams, QueryVector,
};
pub use model::{load_model, save_model, train, TrainConfig, TrainStats, TripleModel};
pub use recommend::{
    AnchorMode, BasketContext, PostProcessConfig, RecommendConfig, Recommender,
    RecommendationSet, ScoreMode,
};
pub use triples::{sample_triples, Triple, ZipfSampler};

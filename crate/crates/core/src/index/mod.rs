//! Maximum-inner-product retrieval over per-item catalog vectors.
//!
//! Scoring a candidate item j for (user u, anchor item i) reduces to one
//! dot product: the full layout concatenates `[q_j q_j p_j p_j]` per item
//! against queries `[p_i h_u q_i h_u]`, so the dot equals
//! `2·symmetric_score - (p_i·h_u + q_i·h_u)`, a per-query constant away
//! from the symmetrized cohesion score. The asymmetric layout stores
//! `[q_j q_j]` against `[p_i h_u]`, matching the plain cohesion ranking.
//!
//! Two backends answer top-k: an exhaustive scanner (ground truth) and a
//! navigable small-world graph searched by raw inner product.

mod hnsw;
mod io;
mod query;

pub use query::{
    make_query_vector, make_query_vector_anonymous, make_query_vector_asymmetric,
    make_query_vector_averaged, QueryVector,
};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::model::TripleModel;

/// Which concatenation the catalog stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CatalogLayout {
    /// `[q_j q_j p_j p_j]`, dimension 4d; pairs with `[p_i h_u q_i h_u]`.
    Full,
    /// `[q_j q_j]`, dimension 2d; pairs with `[p_i h_u]`.
    Asymmetric,
}

impl CatalogLayout {
    pub fn width(&self, dim: usize) -> usize {
        match self {
            CatalogLayout::Full => 4 * dim,
            CatalogLayout::Asymmetric => 2 * dim,
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match self {
            CatalogLayout::Full => 0,
            CatalogLayout::Asymmetric => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(CatalogLayout::Full),
            1 => Ok(CatalogLayout::Asymmetric),
            other => Err(Error::Format(format!("unknown catalog layout tag {other}"))),
        }
    }
}

/// Retrieval backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexBackend {
    Exact,
    Hnsw,
}

impl IndexBackend {
    pub fn label(&self) -> &'static str {
        match self {
            IndexBackend::Exact => "exact",
            IndexBackend::Hnsw => "hnsw",
        }
    }
}

/// Graph-backend parameters; ignored by the exact backend.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexParams {
    /// Graph degree (max links per node above level 0; level 0 keeps 2x).
    pub graph_degree: usize,
    /// Construction beam width.
    pub ef_construction: usize,
    /// Default search beam width.
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            graph_degree: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 42,
        }
    }
}

/// A scored item; orders by score, ties broken toward the lower item id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Hit {
    pub score: f64,
    pub item: u32,
}

impl Eq for Hit {}

impl Ord for Hit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .partial_cmp(&other.score)
            .expect("scores are finite")
            .then_with(|| other.item.cmp(&self.item))
    }
}

impl PartialOrd for Hit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sorted item-id set for exclusion filters.
#[derive(Clone, Debug, Default)]
pub struct ExcludeSet(Vec<u32>);

impl ExcludeSet {
    pub fn empty() -> Self {
        ExcludeSet(Vec::new())
    }

    pub fn new(ids: impl IntoIterator<Item = u32>) -> Self {
        let mut v: Vec<u32> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        ExcludeSet(v)
    }

    #[inline]
    pub fn contains(&self, id: u32) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&[u32]> for ExcludeSet {
    fn from(ids: &[u32]) -> Self {
        ExcludeSet::new(ids.iter().copied())
    }
}

/// Per-item catalog vectors plus the retrieval structure over them.
///
/// Immutable once built; queries are pure and safe to run concurrently.
#[derive(Clone, Debug)]
pub struct CatalogIndex {
    layout: CatalogLayout,
    vectors: Mat<f32>,
    graph: Option<hnsw::HnswGraph>,
    params: IndexParams,
}

impl CatalogIndex {
    /// Build the catalog from a model. The exact backend stores raw
    /// vectors; the graph backend additionally links them into a
    /// navigable small-world structure (deterministic per seed).
    pub fn build(
        model: &TripleModel<f32>,
        layout: CatalogLayout,
        backend: IndexBackend,
        params: IndexParams,
    ) -> Result<Self> {
        let n = model.item_count();
        if n == 0 {
            return Err(Error::EmptyCatalog);
        }
        let width = layout.width(model.dim());
        let mut data = Vec::with_capacity(n * width);
        for j in 0..n as u32 {
            let (p, q) = (model.anchor(j), model.dual(j));
            match layout {
                CatalogLayout::Full => {
                    data.extend_from_slice(q);
                    data.extend_from_slice(q);
                    data.extend_from_slice(p);
                    data.extend_from_slice(p);
                }
                CatalogLayout::Asymmetric => {
                    data.extend_from_slice(q);
                    data.extend_from_slice(q);
                }
            }
        }
        let vectors = Mat::from_vec(n, width, data);
        let graph = match backend {
            IndexBackend::Exact => None,
            IndexBackend::Hnsw => Some(hnsw::build_graph(
                &vectors,
                params.graph_degree,
                params.ef_construction,
                params.seed,
            )),
        };
        Ok(CatalogIndex {
            layout,
            vectors,
            graph,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored vector width (4d for the full layout, 2d asymmetric).
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn layout(&self) -> CatalogLayout {
        self.layout
    }

    pub fn backend(&self) -> IndexBackend {
        if self.graph.is_some() {
            IndexBackend::Hnsw
        } else {
            IndexBackend::Exact
        }
    }

    pub fn params(&self) -> IndexParams {
        self.params
    }

    /// Override the search beam width.
    pub fn set_ef_search(&mut self, ef: usize) {
        self.params.ef_search = ef;
    }

    /// Raw catalog entry for item `j`.
    pub fn entry(&self, j: u32) -> &[f32] {
        self.vectors.row(j as usize)
    }

    /// Top `k` items by inner product against the query, descending,
    /// ties broken by ascending item id, excluded ids filtered out.
    /// Returns fewer than `k` when the catalog is exhausted.
    pub fn topk(&self, query: &QueryVector, k: usize, exclude: &ExcludeSet) -> Vec<(u32, f64)> {
        assert_eq!(
            query.values().len(),
            self.dim(),
            "query/catalog width mismatch (layout {:?})",
            self.layout
        );
        if k == 0 {
            return Vec::new();
        }
        let hits = match &self.graph {
            None => self.exact_topk(query.values(), k, exclude),
            Some(graph) => {
                // Over-fetch so filtering cannot starve the result.
                let ef = self.params.ef_search.max(k + exclude.len());
                hnsw::search(&self.vectors, graph, query.values(), ef)
                    .into_iter()
                    .filter(|h| !exclude.contains(h.item))
                    .take(k)
                    .collect()
            }
        };
        hits.into_iter().map(|h| (h.item, h.score)).collect()
    }

    /// Semantically identical to mapping [`Self::topk`] over `queries`;
    /// runs the per-query searches in parallel.
    pub fn batch_topk(
        &self,
        queries: &[QueryVector],
        k: usize,
        exclude: &ExcludeSet,
    ) -> Vec<Vec<(u32, f64)>> {
        queries
            .par_iter()
            .map(|q| self.topk(q, k, exclude))
            .collect()
    }

    fn exact_topk(&self, query: &[f32], k: usize, exclude: &ExcludeSet) -> Vec<Hit> {
        let mut heap: BinaryHeap<std::cmp::Reverse<Hit>> = BinaryHeap::with_capacity(k + 1);
        for (j, row) in self.vectors.iter_rows().enumerate() {
            let item = j as u32;
            if exclude.contains(item) {
                continue;
            }
            let hit = Hit {
                score: dot(row, query),
                item,
            };
            if heap.len() < k {
                heap.push(std::cmp::Reverse(hit));
            } else if hit > heap.peek().expect("non-empty").0 {
                heap.pop();
                heap.push(std::cmp::Reverse(hit));
            }
        }
        heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(items: usize, users: usize, dim: usize, seed: u64) -> TripleModel<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TripleModel::init_random(items, users, dim, 0.5, &mut rng)
    }

    #[test]
    fn entries_are_the_stated_concatenations() {
        let model = random_model(5, 2, 3, 1);
        let full = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams::default()).unwrap();
        let asym = CatalogIndex::build(&model, CatalogLayout::Asymmetric, IndexBackend::Exact, IndexParams::default()).unwrap();
        for j in 0..5u32 {
            let (p, q) = (model.anchor(j), model.dual(j));
            let want_full: Vec<f32> = [q, q, p, p].concat();
            assert_eq!(full.entry(j), &want_full[..]);
            let want_asym: Vec<f32> = [q, q].concat();
            assert_eq!(asym.entry(j), &want_asym[..]);
            // Duplicated d-blocks by construction.
            let d = model.dim();
            assert_eq!(&full.entry(j)[..d], &full.entry(j)[d..2 * d]);
            assert_eq!(&full.entry(j)[2 * d..3 * d], &full.entry(j)[3 * d..]);
        }
    }

    #[test]
    fn singleton_catalog_always_returns_its_item() {
        let model = random_model(1, 1, 4, 2);
        for backend in [IndexBackend::Exact, IndexBackend::Hnsw] {
            let idx = CatalogIndex::build(&model, CatalogLayout::Full, backend, IndexParams::default()).unwrap();
            let q = make_query_vector(&model, 0, 0).unwrap();
            let hits = idx.topk(&q, 3, &ExcludeSet::empty());
            assert_eq!(hits.len(), 1);
            assert_eq!(hits[0].0, 0);
        }
    }

    #[test]
    fn empty_catalog_is_an_error() {
        let model = TripleModel::<f32>::zeros(0, 1, 4);
        assert!(matches!(
            CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams::default()),
            Err(Error::EmptyCatalog)
        ));
    }

    #[test]
    fn exclusion_is_respected_and_exhaustion_yields_empty() {
        let model = random_model(6, 2, 4, 3);
        for backend in [IndexBackend::Exact, IndexBackend::Hnsw] {
            let idx = CatalogIndex::build(&model, CatalogLayout::Full, backend, IndexParams::default()).unwrap();
            let q = make_query_vector(&model, 0, 1).unwrap();
            let all = ExcludeSet::new(0..6);
            assert!(idx.topk(&q, 4, &all).is_empty());
            let some = ExcludeSet::new([0, 2, 4]);
            for (item, _) in idx.topk(&q, 6, &some) {
                assert!(!some.contains(item));
            }
        }
    }

    #[test]
    fn k_at_least_n_gives_the_full_ranking() {
        let model = random_model(8, 2, 4, 4);
        let idx = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams::default()).unwrap();
        let q = make_query_vector(&model, 1, 3).unwrap();
        let hits = idx.topk(&q, 100, &ExcludeSet::empty());
        assert_eq!(hits.len(), 8);
        for w in hits.windows(2) {
            assert!(w[0].1 >= w[1].1, "scores must be non-increasing");
        }
    }

    #[test]
    fn ties_break_by_ascending_item_id() {
        // All items share one embedding, so every score ties.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let row: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let stack = |rows: usize| {
            crate::linalg::Mat::from_vec(rows, 4, row.iter().copied().cycle().take(rows * 4).collect())
        };
        let model = TripleModel::new(stack(7), stack(7), stack(1));
        let idx = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams::default()).unwrap();
        let q = make_query_vector(&model, 0, 0).unwrap();
        let hits = idx.topk(&q, 5, &ExcludeSet::empty());
        let ids: Vec<u32> = hits.iter().map(|h| h.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn batch_of_one_equals_topk_and_order_does_not_matter() {
        let model = random_model(30, 3, 8, 6);
        let idx = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams::default()).unwrap();
        let queries: Vec<QueryVector> = (0..4)
            .map(|i| make_query_vector(&model, i % 3, i * 5).unwrap())
            .collect();
        let exclude = ExcludeSet::new([2, 11]);
        let batch = idx.batch_topk(&queries, 5, &exclude);
        for (q, expected) in queries.iter().zip(&batch) {
            assert_eq!(&idx.topk(q, 5, &exclude), expected);
        }
        let reversed: Vec<QueryVector> = queries.iter().rev().cloned().collect();
        let batch_rev = idx.batch_topk(&reversed, 5, &exclude);
        for (a, b) in batch.iter().zip(batch_rev.iter().rev()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn hnsw_round_trips_through_the_file_format() {
        let model = random_model(80, 4, 6, 7);
        let built = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Hnsw, IndexParams {
            ef_search: 40,
            ..IndexParams::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.t2vi");
        built.save(&path).unwrap();
        let loaded = CatalogIndex::load(&path).unwrap();
        assert_eq!(loaded.backend(), IndexBackend::Hnsw);
        assert_eq!(loaded.len(), built.len());
        assert_eq!(loaded.dim(), built.dim());
        for j in 0..80u32 {
            assert_eq!(built.entry(j), loaded.entry(j));
        }
        for u in 0..4u32 {
            let q = make_query_vector(&model, u, (u * 7) % 80).unwrap();
            assert_eq!(
                built.topk(&q, 10, &ExcludeSet::empty()),
                loaded.topk(&q, 10, &ExcludeSet::empty())
            );
        }
    }

    #[test]
    fn exact_round_trips_through_the_file_format() {
        let model = random_model(12, 2, 4, 8);
        let built = CatalogIndex::build(&model, CatalogLayout::Asymmetric, IndexBackend::Exact, IndexParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.t2vi");
        built.save(&path).unwrap();
        let loaded = CatalogIndex::load(&path).unwrap();
        assert_eq!(loaded.backend(), IndexBackend::Exact);
        assert_eq!(loaded.layout(), CatalogLayout::Asymmetric);
        for j in 0..12u32 {
            assert_eq!(built.entry(j), loaded.entry(j));
        }
    }

    #[test]
    fn corrupt_index_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.t2vi");
        std::fs::write(&path, b"WRNG\x01\x00\x00\x00").unwrap();
        assert!(matches!(CatalogIndex::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let model = random_model(60, 3, 5, 9);
        let params = IndexParams::default();
        let a = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Hnsw, params).unwrap();
        let b = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Hnsw, params).unwrap();
        let q = make_query_vector_anonymous(&model, 4).unwrap();
        assert_eq!(
            a.topk(&q, 10, &ExcludeSet::empty()),
            b.topk(&q, 10, &ExcludeSet::empty())
        );
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a"), dir.path().join("b"));
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }
}

//! Approximate-backend fidelity against the exhaustive scanner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trivec_core::index::make_query_vector;
use trivec_core::{CatalogIndex, CatalogLayout, ExcludeSet, IndexBackend, IndexParams, TripleModel};

fn overlap(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let want: std::collections::HashSet<u32> = b.iter().map(|h| h.0).collect();
    let hits = a.iter().filter(|h| want.contains(&h.0)).count();
    hits as f64 / b.len().max(1) as f64
}

#[test]
fn graph_backend_recall_at_ten_exceeds_95_percent() {
    let n = 5000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let model = TripleModel::<f32>::init_random(n, 100, 16, 0.5, &mut rng);
    let exact = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams::default()).unwrap();
    let params = IndexParams {
        ef_search: 200,
        ..IndexParams::default()
    };
    let approx = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Hnsw, params).unwrap();

    let mut total = 0.0;
    let queries = 100;
    for q in 0..queries {
        let query = make_query_vector(&model, q % 100, (q * 37) % n as u32).unwrap();
        let truth = exact.topk(&query, 10, &ExcludeSet::empty());
        let got = approx.topk(&query, 10, &ExcludeSet::empty());
        total += overlap(&got, &truth);
    }
    let mean = total / queries as f64;
    assert!(mean >= 0.95, "mean top-10 overlap {mean}");
}

#[test]
fn graph_backend_respects_exclusions_under_overfetch() {
    let n = 2000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let model = TripleModel::<f32>::init_random(n, 10, 8, 0.5, &mut rng);
    let approx = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Hnsw, IndexParams::default()).unwrap();
    let exclude = ExcludeSet::new((0..500).map(|i| i * 4));
    for u in 0..10u32 {
        let query = make_query_vector(&model, u, u * 31 % n as u32).unwrap();
        let hits = approx.topk(&query, 20, &exclude);
        assert_eq!(hits.len(), 20, "over-fetch must survive the filter");
        for (item, _) in hits {
            assert!(!exclude.contains(item));
        }
    }
}

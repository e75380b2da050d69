//! Shared fixtures for the service and pipeline tests.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trivec_core::{
    item_frequencies, synth, CatalogIndex, CatalogLayout, IndexBackend, IndexParams, TripleModel,
};

pub struct Artifacts {
    pub model_path: PathBuf,
    pub index_path: PathBuf,
    pub items: usize,
    pub users: usize,
    pub dim: usize,
}

/// Write a small random model, popularity sidecar, and exact index into
/// `dir`. The vocabulary uses `u{n}` / `i{n}` external ids.
pub fn write_artifacts(dir: &Path, items: usize, users: usize, dim: usize, seed: u64) -> Artifacts {
    let log = synth::random_baskets(users, items, users * 2, (1, 4.min(items)), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = TripleModel::<f32>::init_random(items, users, dim, 0.5, &mut rng);
    let model_path = dir.join("model.t2vm");
    trivec_core::save_model(&model, &log.vocab, &model_path).unwrap();
    item_frequencies(&log)
        .save(model_path.with_extension("t2vp"))
        .unwrap();
    let index = CatalogIndex::build(&model, CatalogLayout::Full, IndexBackend::Exact, IndexParams {
        seed,
        ..IndexParams::default()
    })
    .unwrap();
    let index_path = dir.join("catalog.t2vi");
    index.save(&index_path).unwrap();
    Artifacts {
        model_path,
        index_path,
        items,
        users,
        dim,
    }
}

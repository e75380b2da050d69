//! Synthetic corpora for benchmarks and end-to-end checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Basket, TransactionLog, Vocabulary};

/// Configuration for the planted-pairs corpus: items come in
/// complementary pairs that co-occur in most of their baskets, which a
/// co-purchase model should learn and a popularity baseline cannot.
#[derive(Clone, Debug)]
pub struct PlantedConfig {
    pub pairs: usize,
    pub users: usize,
    pub baskets_per_user: usize,
    /// Pairs drawn per basket (basket size is up to 2x this).
    pub pairs_per_basket: usize,
    /// Probability that a drawn pair contributes both mates.
    pub co_occur_rate: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            pairs: 250,
            users: 2000,
            baskets_per_user: 10,
            pairs_per_basket: 2,
            co_occur_rate: 0.9,
            seed: 42,
        }
    }
}

/// Items `2t` and `2t+1` are mates of pair `t`.
pub fn pair_mate(item: u32) -> u32 {
    item ^ 1
}

/// Generate the planted-pairs corpus. Pair popularity is uniform, so
/// frequency ranking carries no signal about pair structure.
pub fn planted_pairs(cfg: &PlantedConfig) -> TransactionLog {
    let mut vocab = Vocabulary::new();
    for u in 0..cfg.users {
        vocab.intern_user(&format!("u{u}"));
    }
    for i in 0..cfg.pairs * 2 {
        vocab.intern_item(&format!("i{i}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut baskets = Vec::with_capacity(cfg.users * cfg.baskets_per_user);
    for u in 0..cfg.users as u32 {
        for b in 0..cfg.baskets_per_user {
            let mut items = Vec::with_capacity(cfg.pairs_per_basket * 2);
            for _ in 0..cfg.pairs_per_basket {
                let pair = rng.random_range(0..cfg.pairs) as u32;
                let first = 2 * pair + rng.random_range(0..2u32);
                if rng.random::<f64>() < cfg.co_occur_rate {
                    items.push(first);
                    items.push(pair_mate(first));
                } else {
                    items.push(first);
                }
            }
            let basket = Basket::new(u, format!("u{u}b{b}"), items);
            if basket.len() >= 2 {
                baskets.push(basket);
            }
        }
    }
    TransactionLog { baskets, vocab }
}

/// Uniformly random baskets, mainly for latency benchmarks.
pub fn random_baskets(
    users: usize,
    items: usize,
    baskets: usize,
    size_range: (usize, usize),
    seed: u64,
) -> TransactionLog {
    assert!(size_range.0 >= 1 && size_range.0 <= size_range.1);
    assert!(size_range.1 <= items);
    let mut vocab = Vocabulary::new();
    for u in 0..users {
        vocab.intern_user(&format!("u{u}"));
    }
    for i in 0..items {
        vocab.intern_item(&format!("i{i}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let baskets = (0..baskets)
        .map(|b| {
            let user = rng.random_range(0..users) as u32;
            let size = rng.random_range(size_range.0..=size_range.1);
            let items: Vec<u32> = rand::seq::index::sample(&mut rng, items, size)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            Basket::new(user, format!("b{b}"), items)
        })
        .collect();
    TransactionLog { baskets, vocab }
}

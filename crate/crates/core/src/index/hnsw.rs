//! Hierarchical navigable small-world graph over raw inner product.
//!
//! Higher inner product plays the role of "closer"; no metric transform
//! is applied to the vectors. Level draws come from a seeded generator
//! and nodes are inserted in catalog order, so builds are deterministic.

use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::index::Hit;
use crate::linalg::{dot, Mat};

#[derive(Clone, Debug)]
pub(crate) struct HnswGraph {
    /// `links[node][level]` holds that node's neighbor ids.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
    pub(crate) entry_point: u32,
    pub(crate) max_level: usize,
}

fn level_cap(degree: usize, level: usize) -> usize {
    if level == 0 {
        degree * 2
    } else {
        degree
    }
}

/// Reusable visited-set built as a bitmap.
struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Visited(vec![0u64; n.div_ceil(64)])
    }

    #[inline]
    fn insert(&mut self, id: u32) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

/// Greedy single-entry descent used on the upper levels.
fn greedy_step(vectors: &Mat<f32>, links: &[Vec<Vec<u32>>], query: &[f32], start: u32, level: usize) -> u32 {
    let mut current = start;
    let mut best = dot(vectors.row(current as usize), query);
    loop {
        let mut improved = false;
        for &nb in &links[current as usize][level] {
            let s = dot(vectors.row(nb as usize), query);
            if s > best || (s == best && nb < current) {
                best = s;
                current = nb;
                improved = true;
            }
        }
        if !improved {
            return current;
        }
    }
}

/// Beam search within one level; returns up to `ef` hits, best first.
fn search_layer(
    vectors: &Mat<f32>,
    links: &[Vec<Vec<u32>>],
    query: &[f32],
    entry: u32,
    ef: usize,
    level: usize,
) -> Vec<Hit> {
    let mut visited = Visited::new(vectors.rows());
    visited.insert(entry);
    let first = Hit {
        score: dot(vectors.row(entry as usize), query),
        item: entry,
    };
    let mut candidates: BinaryHeap<Hit> = BinaryHeap::new();
    let mut results: BinaryHeap<std::cmp::Reverse<Hit>> = BinaryHeap::with_capacity(ef + 1);
    candidates.push(first);
    results.push(std::cmp::Reverse(first));

    while let Some(current) = candidates.pop() {
        let worst = results.peek().expect("results non-empty").0;
        if results.len() >= ef && current.score < worst.score {
            break;
        }
        for &nb in &links[current.item as usize][level] {
            if !visited.insert(nb) {
                continue;
            }
            let hit = Hit {
                score: dot(vectors.row(nb as usize), query),
                item: nb,
            };
            let worst = results.peek().expect("results non-empty").0;
            if results.len() < ef || hit > worst {
                candidates.push(hit);
                results.push(std::cmp::Reverse(hit));
                if results.len() > ef {
                    results.pop();
                }
            }
        }
    }
    results.into_sorted_vec().into_iter().map(|r| r.0).collect()
}

pub(crate) fn build_graph(vectors: &Mat<f32>, degree: usize, ef_construction: usize, seed: u64) -> HnswGraph {
    let n = vectors.rows();
    assert!(n > 0, "cannot build a graph over an empty catalog");
    let degree = degree.max(2);
    let level_scale = 1.0 / (degree as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let levels: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
            (-u.ln() * level_scale) as usize
        })
        .collect();

    let mut links: Vec<Vec<Vec<u32>>> = levels.iter().map(|&l| vec![Vec::new(); l + 1]).collect();
    let mut entry_point = 0u32;
    let mut max_level = levels[0];

    for node in 1..n as u32 {
        let target = levels[node as usize];
        let vec_node = vectors.row(node as usize);
        let mut ep = entry_point;
        for level in (target + 1..=max_level).rev() {
            ep = greedy_step(vectors, &links, vec_node, ep, level);
        }
        for level in (0..=target.min(max_level)).rev() {
            let found = search_layer(vectors, &links, vec_node, ep, ef_construction, level);
            let cap = level_cap(degree, level);
            let chosen: Vec<u32> = found.iter().take(degree).map(|h| h.item).collect();
            for &nb in &chosen {
                links[nb as usize][level].push(node);
                if links[nb as usize][level].len() > cap {
                    prune(vectors, &mut links, nb, level, cap);
                }
            }
            links[node as usize][level] = chosen;
            if let Some(best) = found.first() {
                ep = best.item;
            }
        }
        if target > max_level {
            max_level = target;
            entry_point = node;
        }
    }

    HnswGraph {
        links,
        entry_point,
        max_level,
    }
}

/// Keep the `cap` highest-inner-product links of `node` at `level`.
fn prune(vectors: &Mat<f32>, links: &mut [Vec<Vec<u32>>], node: u32, level: usize, cap: usize) {
    let base = vectors.row(node as usize);
    let mut scored: Vec<Hit> = links[node as usize][level]
        .iter()
        .map(|&nb| Hit {
            score: dot(vectors.row(nb as usize), base),
            item: nb,
        })
        .collect();
    scored.sort_unstable_by(|a, b| b.cmp(a));
    scored.truncate(cap);
    links[node as usize][level] = scored.into_iter().map(|h| h.item).collect();
}

/// Full search: greedy descent through the upper levels, then a beam of
/// width `ef` on the base level. Returns up to `ef` hits, best first.
pub(crate) fn search(vectors: &Mat<f32>, graph: &HnswGraph, query: &[f32], ef: usize) -> Vec<Hit> {
    let mut ep = graph.entry_point;
    for level in (1..=graph.max_level).rev() {
        ep = greedy_step(vectors, &graph.links, query, ep, level);
    }
    search_layer(vectors, &graph.links, query, ep, ef.max(1), 0)
}

//! Offline evaluation: per-basket 80/20 splits, Recall@K and NDCG@K,
//! the popularity baseline, strategy comparison, and latency tables.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{FrequencyTable, TransactionLog};
use crate::error::{Error, Result};
use crate::index::CatalogIndex;
use crate::model::TripleModel;
use crate::recommend::{
    AnchorMode, BasketContext, PostProcessConfig, RecommendConfig, Recommender, ScoreMode,
};

/// One evaluable basket: the inference subset and the held-out items.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalSplit {
    pub user: u32,
    pub inference: Vec<u32>,
    pub held_out: Vec<u32>,
}

/// All splits plus the count of baskets too small to split.
#[derive(Clone, Debug, Default)]
pub struct EvalSplits {
    pub splits: Vec<EvalSplit>,
    pub skipped: usize,
}

/// Split each test basket into an inference subset and a held-out
/// relevant set. A basket of size `s >= 2` keeps `max(1, floor(f*s))`
/// items for inference (capped at `s - 1` so the held-out side is never
/// empty); size-1 baskets are skipped and counted.
pub fn make_eval_split(test: &TransactionLog, inference_fraction: f64, seed: u64) -> EvalSplits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = EvalSplits::default();
    for basket in &test.baskets {
        let s = basket.len();
        if s < 2 {
            out.skipped += 1;
            continue;
        }
        let take = ((inference_fraction * s as f64).floor() as usize)
            .max(1)
            .min(s - 1);
        let mut items = basket.items.clone();
        items.shuffle(&mut rng);
        let mut inference = items[..take].to_vec();
        let mut held_out = items[take..].to_vec();
        inference.sort_unstable();
        held_out.sort_unstable();
        out.splits.push(EvalSplit {
            user: basket.user,
            inference,
            held_out,
        });
    }
    out
}

/// Fraction of relevant items found in the first K recommendations.
pub fn recall_at_k(recommended: &[u32], relevant: &[u32], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidK(k));
    }
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let hits = recommended
        .iter()
        .take(k)
        .filter(|id| relevant.contains(id))
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Positionally discounted gain over the first K recommendations:
/// the sum of `1/log2(p+1)` over hit positions `p` (1-based). The
/// normalized variant divides by the ideal, `sum_{p=1..min(K,|relevant|)}
/// 1/log2(p+1)`, and is 0 when the relevant set is empty.
pub fn ndcg_at_k(recommended: &[u32], relevant: &[u32], k: usize, normalized: bool) -> f64 {
    let dcg: f64 = recommended
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(id))
        .map(|(idx, _)| 1.0 / ((idx + 2) as f64).log2())
        .sum();
    if !normalized {
        return dcg;
    }
    let ideal: f64 = (0..relevant.len().min(k))
        .map(|idx| 1.0 / ((idx + 2) as f64).log2())
        .sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

/// Popularity baseline: most frequent training items minus exclusions.
pub fn item_pop_recommend(freq: &FrequencyTable, k: usize, exclude: &[u32]) -> Vec<(u32, f64)> {
    freq.top_k(k, exclude)
}

/// A ranking strategy under evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    ItemPop,
    Embedding {
        score: ScoreMode,
        anchors: AnchorMode,
        personalized: bool,
    },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::ItemPop => "item_pop".to_string(),
            Strategy::Embedding {
                score,
                anchors,
                personalized,
            } => {
                let base = match (score, personalized) {
                    (ScoreMode::Symmetric, true) => "symmetric",
                    (ScoreMode::Symmetric, false) => "np",
                    (ScoreMode::Plain, true) => "cohesion",
                    (ScoreMode::Plain, false) => "cohesion_np",
                };
                match anchors {
                    AnchorMode::PerAnchor => base.to_string(),
                    AnchorMode::BasketAverage => format!("{base}_avg"),
                }
            }
        }
    }

    /// The standard report rows: popularity, plain cohesion in both
    /// anchor modes, the non-personalized dual-only variant, and the
    /// symmetrized pipeline in both anchor modes.
    pub fn default_suite() -> Vec<Strategy> {
        vec![
            Strategy::ItemPop,
            Strategy::Embedding {
                score: ScoreMode::Plain,
                anchors: AnchorMode::PerAnchor,
                personalized: true,
            },
            Strategy::Embedding {
                score: ScoreMode::Plain,
                anchors: AnchorMode::BasketAverage,
                personalized: true,
            },
            Strategy::Embedding {
                score: ScoreMode::Symmetric,
                anchors: AnchorMode::PerAnchor,
                personalized: false,
            },
            Strategy::Embedding {
                score: ScoreMode::Symmetric,
                anchors: AnchorMode::PerAnchor,
                personalized: true,
            },
            Strategy::Embedding {
                score: ScoreMode::Symmetric,
                anchors: AnchorMode::BasketAverage,
                personalized: true,
            },
        ]
    }
}

#[derive(Clone, Debug)]
pub struct StrategyMetrics {
    pub strategy: String,
    pub recall: f64,
    pub ndcg_literal: f64,
    pub ndcg_normalized: f64,
    pub baskets: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub k: usize,
    pub rows: Vec<StrategyMetrics>,
}

impl MetricsReport {
    pub fn row(&self, label: &str) -> Option<&StrategyMetrics> {
        self.rows.iter().find(|r| r.strategy == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "strategy,recall_at_{k},ndcg_literal_at_{k},ndcg_norm_at_{k},baskets,skipped\n",
            k = self.k
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{},{}\n",
                r.strategy, r.recall, r.ndcg_literal, r.ndcg_normalized, r.baskets, r.skipped
            ));
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>12} {:>16} {:>13} {:>9} {:>8}",
            "strategy",
            format!("recall@{}", self.k),
            format!("ndcg_lit@{}", self.k),
            format!("ndcg@{}", self.k),
            "baskets",
            "skipped"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {:>12.4} {:>16.4} {:>13.4} {:>9} {:>8}",
                r.strategy, r.recall, r.ndcg_literal, r.ndcg_normalized, r.baskets, r.skipped
            )?;
        }
        Ok(())
    }
}

/// Evaluate strategies over the splits, averaging metrics per basket.
///
/// The passed index must use the full layout; plain-cohesion strategies
/// rank through an exact asymmetric catalog built internally. Anchor
/// sampling derives one seed per basket from `seed`, so runs are
/// reproducible and backends comparable.
pub fn evaluate(
    model: &TripleModel<f32>,
    index: &CatalogIndex,
    popularity: &FrequencyTable,
    splits: &EvalSplits,
    k: usize,
    strategies: &[Strategy],
    seed: u64,
) -> Result<MetricsReport> {
    if splits.splits.is_empty() {
        return Err(Error::NoEvaluableBaskets);
    }
    if k < 1 {
        return Err(Error::InvalidK(k));
    }

    let needs_plain = strategies.iter().any(|s| {
        matches!(
            s,
            Strategy::Embedding {
                score: ScoreMode::Plain,
                ..
            }
        )
    });
    let asym = if needs_plain {
        Some(CatalogIndex::build(
            model,
            crate::index::CatalogLayout::Asymmetric,
            crate::index::IndexBackend::Exact,
            crate::index::IndexParams::default(),
        )?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(strategies.len());
    for strategy in strategies {
        let per_basket: Vec<(f64, f64, f64)> = match strategy {
            Strategy::ItemPop => splits
                .splits
                .par_iter()
                .map(|split| {
                    let recs: Vec<u32> = item_pop_recommend(popularity, k, &split.inference)
                        .into_iter()
                        .map(|(id, _)| id)
                        .collect();
                    score_list(&recs, &split.held_out, k)
                })
                .collect::<Result<_>>()?,
            Strategy::Embedding {
                score,
                anchors,
                personalized,
            } => {
                let strategy_index = match score {
                    ScoreMode::Symmetric => index,
                    ScoreMode::Plain => asym.as_ref().expect("asymmetric catalog built above"),
                };
                let config = RecommendConfig {
                    score: *score,
                    anchor_mode: *anchors,
                    post: PostProcessConfig::default(),
                    ..RecommendConfig::default()
                };
                let rec = Recommender::new(model, strategy_index, popularity, config)?;
                splits
                    .splits
                    .par_iter()
                    .enumerate()
                    .map(|(idx, split)| {
                        let ctx = BasketContext {
                            user: personalized.then_some(split.user),
                            items: split.inference.clone(),
                            k,
                        };
                        let out = rec.recommend(&ctx, seed ^ (idx as u64).wrapping_mul(0x9e37_79b9))?;
                        score_list(&out.items(), &split.held_out, k)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let n = per_basket.len() as f64;
        let (mut recall, mut lit, mut norm) = (0.0, 0.0, 0.0);
        for (r, l, m) in &per_basket {
            recall += r;
            lit += l;
            norm += m;
        }
        rows.push(StrategyMetrics {
            strategy: strategy.label(),
            recall: recall / n,
            ndcg_literal: lit / n,
            ndcg_normalized: norm / n,
            baskets: splits.splits.len(),
            skipped: splits.skipped,
        });
    }
    Ok(MetricsReport { k, rows })
}

fn score_list(recommended: &[u32], relevant: &[u32], k: usize) -> Result<(f64, f64, f64)> {
    Ok((
        recall_at_k(recommended, relevant, k)?,
        ndcg_at_k(recommended, relevant, k, false),
        ndcg_at_k(recommended, relevant, k, true),
    ))
}

#[derive(Clone, Debug)]
pub struct LatencyRow {
    pub backend: String,
    pub basket_size: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LatencyTable {
    pub rows: Vec<LatencyRow>,
}

impl LatencyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("backend,basket_size,mean_ms,p50_ms,p99_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4}\n",
                r.backend, r.basket_size, r.mean_ms, r.p50_ms, r.p99_ms
            ));
        }
        out
    }
}

impl fmt::Display for LatencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>11} {:>10} {:>10} {:>10}",
            "backend", "basket_size", "mean_ms", "p50_ms", "p99_ms"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>11} {:>10.3} {:>10.3} {:>10.3}",
                r.backend, r.basket_size, r.mean_ms, r.p50_ms, r.p99_ms
            )?;
        }
        Ok(())
    }
}

/// Nearest-rank percentile over sorted samples.
fn percentile(sorted_ms: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted_ms.len() as f64).ceil() as usize).clamp(1, sorted_ms.len()) - 1;
    sorted_ms[idx]
}

/// Time the full recommendation path on synthetic baskets, per backend
/// and basket size. The same baskets are replayed against every backend.
pub fn benchmark_latency(
    model: &TripleModel<f32>,
    backends: &[(&str, &CatalogIndex)],
    popularity: &FrequencyTable,
    basket_sizes: &[usize],
    repetitions: usize,
    k: usize,
    seed: u64,
) -> Result<LatencyTable> {
    let mut table = LatencyTable::default();
    if repetitions == 0 {
        return Ok(table);
    }
    let n = model.item_count();
    let users = model.user_count() as u32;
    for &size in basket_sizes {
        let size = size.min(n.saturating_sub(1)).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size as u64);
        let baskets: Vec<(u32, Vec<u32>)> = (0..repetitions)
            .map(|_| {
                let user = rng.random_range(0..users);
                let items = rand::seq::index::sample(&mut rng, n, size)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect();
                (user, items)
            })
            .collect();
        for &(name, index) in backends {
            let rec = Recommender::new(model, index, popularity, RecommendConfig::default())?;
            let mut samples = Vec::with_capacity(repetitions);
            for (b, (user, items)) in baskets.iter().enumerate() {
                let ctx = BasketContext {
                    user: Some(*user),
                    items: items.clone(),
                    k,
                };
                let start = Instant::now();
                let out = rec.recommend(&ctx, b as u64)?;
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(out);
                samples.push(elapsed);
            }
            samples.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
            table.rows.push(LatencyRow {
                backend: name.to_string(),
                basket_size: size,
                mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
                p50_ms: percentile(&samples, 0.50),
                p99_ms: percentile(&samples, 0.99),
            });
        }
    }
    Ok(table)
}

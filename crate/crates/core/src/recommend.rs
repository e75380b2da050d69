//! The serving pipeline: basket-anchor selection, per-anchor retrieval,
//! score aggregation, and post-processing into a final top-k.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::corpus::{FrequencyTable, Vocabulary};
use crate::error::{Error, Result};
use crate::index::{
    make_query_vector, make_query_vector_anonymous, make_query_vector_asymmetric,
    make_query_vector_averaged, CatalogIndex, CatalogLayout, ExcludeSet, QueryVector,
};
use crate::model::TripleModel;

/// A recommendation request: optional user, current basket, requested k.
#[derive(Clone, Debug)]
pub struct BasketContext {
    pub user: Option<u32>,
    pub items: Vec<u32>,
    pub k: usize,
}

/// One recommended item with its aggregate score and the anchors whose
/// retrieval lists contributed it.
#[derive(Clone, Debug, PartialEq)]
pub struct RecEntry {
    pub item: u32,
    pub score: f64,
    pub anchors: Vec<u32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecFlags {
    /// Popularity fallback was used (basket empty or fully unknown).
    pub fallback: bool,
    /// The anchor set was subsampled from a large basket.
    pub anchors_sampled: bool,
    /// Fewer than k items survived filtering.
    pub truncated: bool,
}

/// Ranked, deduplicated recommendations. `overflow` holds the next-best
/// candidates kept as a refill buffer for post-processing.
#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationSet {
    pub entries: Vec<RecEntry>,
    pub overflow: Vec<RecEntry>,
    pub k: usize,
    pub flags: RecFlags,
}

impl RecommendationSet {
    pub fn items(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.item).collect()
    }
}

/// Blacklists, category caps, and category-pair deny rules.
#[derive(Clone, Debug, Default)]
pub struct PostProcessConfig {
    pub blacklist_items: HashSet<u32>,
    pub blacklist_categories: HashSet<String>,
    /// Dense item id to category name; items absent here are uncategorized
    /// and exempt from category rules.
    pub categories: HashMap<u32, String>,
    /// Keep at most this many items of any one category.
    pub max_per_category: Option<usize>,
    /// Unordered category pairs that must not co-occur in one result list.
    pub deny_pairs: Vec<(String, String)>,
}

/// On-disk shape of the post-process config (TOML with external ids).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostProcessFile {
    #[serde(default)]
    blacklist_items: Vec<String>,
    #[serde(default)]
    blacklist_categories: Vec<String>,
    max_per_category: Option<usize>,
    #[serde(default)]
    deny_pairs: Vec<(String, String)>,
    #[serde(default)]
    categories: HashMap<String, String>,
}

impl PostProcessConfig {
    pub fn is_noop(&self) -> bool {
        self.blacklist_items.is_empty()
            && self.blacklist_categories.is_empty()
            && self.max_per_category.is_none()
            && self.deny_pairs.is_empty()
    }

    pub fn from_toml_str(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let file: PostProcessFile =
            toml::from_str(text).map_err(|e| Error::BadPostProcess(e.to_string()))?;
        if let Some(cap) = file.max_per_category {
            if cap < 1 {
                return Err(Error::BadPostProcess("max_per_category must be at least 1".into()));
            }
        }
        let mut cfg = PostProcessConfig {
            blacklist_categories: file.blacklist_categories.into_iter().collect(),
            max_per_category: file.max_per_category,
            deny_pairs: file.deny_pairs,
            ..PostProcessConfig::default()
        };
        for name in file.blacklist_items {
            match vocab.item_index(&name) {
                Some(id) => {
                    cfg.blacklist_items.insert(id);
                }
                None => log::warn!("post-process blacklist names unknown item {name:?}"),
            }
        }
        for (name, category) in file.categories {
            match vocab.item_index(&name) {
                Some(id) => {
                    cfg.categories.insert(id, category);
                }
                None => log::warn!("post-process category map names unknown item {name:?}"),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, vocab)
    }
}

/// Which score the retrieval queries realize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    /// Symmetrized score over the full `[q q p p]` catalog.
    Symmetric,
    /// Plain cohesion ranking over the asymmetric `[q q]` catalog.
    Plain,
}

impl ScoreMode {
    pub fn layout(&self) -> CatalogLayout {
        match self {
            ScoreMode::Symmetric => CatalogLayout::Full,
            ScoreMode::Plain => CatalogLayout::Asymmetric,
        }
    }
}

/// Per-anchor querying is the primary mode; basket-average replaces the
/// anchor set with one query built from mean embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorMode {
    PerAnchor,
    BasketAverage,
}

#[derive(Clone, Debug)]
pub struct RecommendConfig {
    /// Baskets larger than this sample half their items as anchors.
    pub anchor_threshold: usize,
    /// Per-anchor retrieval depth, as a multiple of k.
    pub depth_multiplier: usize,
    pub score: ScoreMode,
    pub anchor_mode: AnchorMode,
    pub post: PostProcessConfig,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig {
            anchor_threshold: 6,
            depth_multiplier: 3,
            score: ScoreMode::Symmetric,
            anchor_mode: AnchorMode::PerAnchor,
            post: PostProcessConfig::default(),
        }
    }
}

/// Pick the basket-anchor set: the whole basket when small, otherwise a
/// seeded half-sample (ceiling) without replacement. Returned sorted.
pub fn select_anchor_set(basket: &[u32], threshold: usize, seed: u64) -> Result<Vec<u32>> {
    if basket.is_empty() {
        return Err(Error::EmptyBasket);
    }
    let mut items: Vec<u32> = basket.to_vec();
    items.sort_unstable();
    items.dedup();
    if items.len() <= threshold {
        return Ok(items);
    }
    let take = items.len().div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let mut chosen = items[..take].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Blend per-anchor ranked lists: min-max normalize each list to [0,1],
/// sum an item's normalized scores across lists (missing = 0), rank by
/// sum descending, ties by contributing-anchor count descending, then
/// ascending item id. Keeps `k` entries plus a 3k-deep overflow buffer.
pub fn aggregate(lists: &[(Option<u32>, Vec<(u32, f64)>)], k: usize) -> RecommendationSet {
    aggregate_depth(lists, k, 3 * k)
}

pub(crate) fn aggregate_depth(
    lists: &[(Option<u32>, Vec<(u32, f64)>)],
    k: usize,
    buffer: usize,
) -> RecommendationSet {
    assert!(!lists.is_empty(), "aggregate needs at least one list");
    struct Acc {
        sum: f64,
        lists: usize,
        anchors: Vec<u32>,
    }
    let mut acc: HashMap<u32, Acc> = HashMap::new();
    for (anchor, hits) in lists {
        if hits.is_empty() {
            continue;
        }
        let max = hits.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
        let min = hits.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
        let span = max - min;
        for &(item, score) in hits {
            let norm = if span > 0.0 { (score - min) / span } else { 1.0 };
            let e = acc.entry(item).or_insert(Acc {
                sum: 0.0,
                lists: 0,
                anchors: Vec::new(),
            });
            e.sum += norm;
            e.lists += 1;
            if let Some(a) = anchor {
                e.anchors.push(*a);
            }
        }
    }
    let mut ranked: Vec<(u32, Acc)> = acc.into_iter().collect();
    ranked.sort_by(|(id_a, a), (id_b, b)| {
        b.sum
            .partial_cmp(&a.sum)
            .expect("finite aggregate scores")
            .then_with(|| b.lists.cmp(&a.lists))
            .then_with(|| id_a.cmp(id_b))
    });
    ranked.truncate(buffer.max(k));
    let mut entries: Vec<RecEntry> = ranked
        .into_iter()
        .map(|(item, a)| RecEntry {
            item,
            score: a.sum,
            anchors: a.anchors,
        })
        .collect();
    let overflow = entries.split_off(entries.len().min(k));
    let truncated = entries.len() < k;
    RecommendationSet {
        entries,
        overflow,
        k,
        flags: RecFlags {
            truncated,
            ..RecFlags::default()
        },
    }
}

/// Apply blacklists, per-category caps, and category-pair deny rules in
/// rank order, refilling from the overflow buffer to reach k when
/// possible. Relative order is preserved.
pub fn post_process(set: RecommendationSet, config: &PostProcessConfig, k: usize) -> RecommendationSet {
    let mut accepted: Vec<RecEntry> = Vec::with_capacity(k);
    let mut per_category: HashMap<&str, usize> = HashMap::new();
    let mut present: HashSet<&str> = HashSet::new();

    let denied_with = |cat: &str, present: &HashSet<&str>, rules: &[(String, String)]| {
        rules.iter().any(|(a, b)| {
            (a == cat && present.contains(b.as_str())) || (b == cat && present.contains(a.as_str()))
        })
    };

    for entry in set.entries.into_iter().chain(set.overflow) {
        if accepted.len() == k {
            break;
        }
        if config.blacklist_items.contains(&entry.item) {
            continue;
        }
        if let Some(cat) = config.categories.get(&entry.item) {
            if config.blacklist_categories.contains(cat) {
                continue;
            }
            if let Some(cap) = config.max_per_category {
                if per_category.get(cat.as_str()).copied().unwrap_or(0) >= cap {
                    continue;
                }
            }
            if denied_with(cat, &present, &config.deny_pairs) {
                continue;
            }
            *per_category.entry(cat.as_str()).or_insert(0) += 1;
            present.insert(cat.as_str());
        }
        accepted.push(entry);
    }

    let truncated = accepted.len() < k;
    RecommendationSet {
        entries: accepted,
        overflow: Vec::new(),
        k,
        flags: RecFlags {
            truncated,
            ..set.flags
        },
    }
}

/// Immutable serving bundle: model, catalog index, popularity table, and
/// the pipeline configuration. Queries are pure, so one instance can be
/// shared across threads.
pub struct Recommender<'a> {
    model: &'a TripleModel<f32>,
    index: &'a CatalogIndex,
    popularity: &'a FrequencyTable,
    config: RecommendConfig,
}

impl<'a> Recommender<'a> {
    pub fn new(
        model: &'a TripleModel<f32>,
        index: &'a CatalogIndex,
        popularity: &'a FrequencyTable,
        config: RecommendConfig,
    ) -> Result<Self> {
        let expected = config.score.layout();
        if index.layout() != expected || index.dim() != expected.width(model.dim()) {
            return Err(Error::LayoutMismatch {
                index: format!("{:?}/{}", index.layout(), index.dim()),
                query: format!("{:?}/{}", expected, expected.width(model.dim())),
            });
        }
        if index.len() != model.item_count() || popularity.len() != model.item_count() {
            return Err(Error::Format(format!(
                "catalog size mismatch: model {} items, index {}, popularity {}",
                model.item_count(),
                index.len(),
                popularity.len()
            )));
        }
        Ok(Recommender {
            model,
            index,
            popularity,
            config,
        })
    }

    pub fn config(&self) -> &RecommendConfig {
        &self.config
    }

    pub fn model(&self) -> &TripleModel<f32> {
        self.model
    }

    pub fn index(&self) -> &CatalogIndex {
        self.index
    }

    fn query_for(&self, user: Option<u32>, anchor: u32) -> Result<QueryVector> {
        match (self.config.score, user) {
            (ScoreMode::Symmetric, Some(u)) => make_query_vector(self.model, u, anchor),
            (ScoreMode::Symmetric, None) => make_query_vector_anonymous(self.model, anchor),
            (ScoreMode::Plain, user) => make_query_vector_asymmetric(self.model, user, anchor),
        }
    }

    /// Retrieval for one anchor: the mode-appropriate query (anonymous
    /// when the user is absent), excluding the basket.
    pub fn recommend_for_anchor(
        &self,
        user: Option<u32>,
        anchor: u32,
        k: usize,
        exclude: &[u32],
    ) -> Result<Vec<(u32, f64)>> {
        self.model.check_item(anchor)?;
        let query = self.query_for(user, anchor)?;
        Ok(self.index.topk(&query, k, &ExcludeSet::from(exclude)))
    }

    /// Full pipeline. Unknown basket ids are filtered; an empty or fully
    /// unknown basket falls back to the popularity list (flagged).
    pub fn recommend(&self, ctx: &BasketContext, anchor_seed: u64) -> Result<RecommendationSet> {
        if ctx.k < 1 {
            return Err(Error::InvalidK(ctx.k));
        }
        let k = ctx.k;
        let n = self.model.item_count() as u32;
        let mut basket: Vec<u32> = ctx.items.iter().copied().filter(|&i| i < n).collect();
        basket.sort_unstable();
        basket.dedup();

        let user = match ctx.user {
            Some(u) if (u as usize) < self.model.user_count() => Some(u),
            _ => None,
        };

        if basket.is_empty() {
            let hits = self.popularity.top_k(3 * k, &[]);
            let entries = hits
                .into_iter()
                .map(|(item, score)| RecEntry {
                    item,
                    score,
                    anchors: Vec::new(),
                })
                .collect();
            let set = RecommendationSet {
                entries,
                overflow: Vec::new(),
                k,
                flags: RecFlags {
                    fallback: true,
                    ..RecFlags::default()
                },
            };
            let mut out = post_process(set, &self.config.post, k);
            out.flags.fallback = true;
            return Ok(out);
        }

        let anchors = select_anchor_set(&basket, self.config.anchor_threshold, anchor_seed)?;
        let sampled = anchors.len() < basket.len();
        let depth = k * self.config.depth_multiplier.max(1);
        let exclude = ExcludeSet::from(basket.as_slice());

        let lists: Vec<(Option<u32>, Vec<(u32, f64)>)> = match self.config.anchor_mode {
            AnchorMode::PerAnchor => {
                let queries: Vec<QueryVector> = anchors
                    .iter()
                    .map(|&a| self.query_for(user, a))
                    .collect::<Result<_>>()?;
                let hits = self.index.batch_topk(&queries, depth, &exclude);
                anchors.iter().map(|&a| Some(a)).zip(hits).collect()
            }
            AnchorMode::BasketAverage => {
                let query =
                    make_query_vector_averaged(self.model, user, &anchors, self.config.score.layout())?;
                vec![(None, self.index.topk(&query, depth, &exclude))]
            }
        };

        let mut set = aggregate_depth(&lists, k, depth);
        set.flags.anchors_sampled = sampled;
        let mut out = post_process(set, &self.config.post, k);
        out.flags.anchors_sampled = sampled;
        Ok(out)
    }
}

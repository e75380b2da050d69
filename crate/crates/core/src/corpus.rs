//! Basket transaction ingestion: id interning, canonical CSV loading,
//! seeded train/test splits, and frequency statistics.
//!
//! The canonical ingestion format is UTF-8 CSV with the header
//! `user_id,basket_id,item_id`, one row per (basket, item). Ids are
//! arbitrary non-empty strings. Rows sharing a `(user_id, basket_id)`
//! pair merge into one basket; duplicate items within a basket are
//! dropped (a basket is a set).

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Interned user and item identifiers.
///
/// Dense ids are contiguous in `[0, count)` and assigned in first-appearance
/// order, so re-ingesting the same file reproduces the same mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    user_to_dense: HashMap<String, u32>,
    item_to_dense: HashMap<String, u32>,
    user_names: Vec<String>,
    item_names: Vec<String>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn user_count(&self) -> usize {
        self.user_names.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_names.len()
    }

    pub fn intern_user(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.user_to_dense.get(name) {
            return id;
        }
        let id = self.user_names.len() as u32;
        self.user_to_dense.insert(name.to_owned(), id);
        self.user_names.push(name.to_owned());
        id
    }

    pub fn intern_item(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.item_to_dense.get(name) {
            return id;
        }
        let id = self.item_names.len() as u32;
        self.item_to_dense.insert(name.to_owned(), id);
        self.item_names.push(name.to_owned());
        id
    }

    pub fn user_index(&self, name: &str) -> Option<u32> {
        self.user_to_dense.get(name).copied()
    }

    pub fn item_index(&self, name: &str) -> Option<u32> {
        self.item_to_dense.get(name).copied()
    }

    pub fn user_name(&self, id: u32) -> Option<&str> {
        self.user_names.get(id as usize).map(|s| s.as_str())
    }

    pub fn item_name(&self, id: u32) -> Option<&str> {
        self.item_names.get(id as usize).map(|s| s.as_str())
    }

    pub fn user_names(&self) -> &[String] {
        &self.user_names
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    /// Rebuild the lookup maps from the name tables (used when loading
    /// a serialized vocabulary).
    pub fn from_names(user_names: Vec<String>, item_names: Vec<String>) -> Self {
        let user_to_dense = user_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        let item_to_dense = item_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Vocabulary {
            user_to_dense,
            item_to_dense,
            user_names,
            item_names,
        }
    }
}

/// One shopping basket: a user plus a deduplicated item set.
///
/// Items are kept sorted ascending, which both encodes the set invariant
/// and makes every downstream sampling step deterministic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basket {
    pub user: u32,
    pub basket_id: String,
    pub items: Vec<u32>,
}

impl Basket {
    pub fn new(user: u32, basket_id: impl Into<String>, items: impl IntoIterator<Item = u32>) -> Self {
        let mut items: Vec<u32> = items.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        Basket {
            user,
            basket_id: basket_id.into(),
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// The full interaction corpus: an ordered basket collection plus the
/// vocabulary every basket's ids are registered in.
#[derive(Clone, Debug)]
pub struct TransactionLog {
    pub baskets: Vec<Basket>,
    pub vocab: Vocabulary,
}

impl TransactionLog {
    pub fn basket_count(&self) -> usize {
        self.baskets.len()
    }

    pub fn user_count(&self) -> usize {
        self.vocab.user_count()
    }

    pub fn item_count(&self) -> usize {
        self.vocab.item_count()
    }
}

const EXPECTED_HEADER: [&str; 3] = ["user_id", "basket_id", "item_id"];

/// Load baskets from the canonical CSV format.
pub fn load_baskets(path: impl AsRef<Path>) -> Result<TransactionLog> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_baskets_from_reader(file, path)
}

/// Same as [`load_baskets`] but over any reader; `origin` is used in
/// error messages only.
pub fn load_baskets_from_reader<R: Read>(reader: R, origin: impl AsRef<Path>) -> Result<TransactionLog> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    {
        let headers = csv.headers().map_err(|e| Error::Format(e.to_string()))?;
        let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
        if got != EXPECTED_HEADER {
            return Err(Error::BadHeader(got.join(",")));
        }
    }

    let mut vocab = Vocabulary::new();
    let mut baskets: Vec<(String, u32, Vec<u32>)> = Vec::new();
    let mut by_key: HashMap<(u32, String), usize> = HashMap::new();

    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::MalformedRow {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let (user_s, basket_s, item_s) = (&record[0], &record[1], &record[2]);
        if user_s.is_empty() || basket_s.is_empty() || item_s.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty id field".to_string(),
            });
        }
        let user = vocab.intern_user(user_s);
        let item = vocab.intern_item(item_s);
        let key = (user, basket_s.to_string());
        match by_key.get(&key) {
            Some(&idx) => baskets[idx].2.push(item),
            None => {
                by_key.insert(key, baskets.len());
                baskets.push((basket_s.to_string(), user, vec![item]));
            }
        }
    }

    if baskets.is_empty() {
        return Err(Error::EmptyInput(origin.as_ref().to_path_buf()));
    }

    let baskets = baskets
        .into_iter()
        .map(|(id, user, items)| Basket::new(user, id, items))
        .collect();
    Ok(TransactionLog { baskets, vocab })
}

/// Write a log back out in the canonical CSV format, external ids and
/// one (basket, item) row at a time.
pub fn save_baskets_csv(log: &TransactionLog, path: impl AsRef<Path>) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "user_id,basket_id,item_id").map_err(io_err)?;
    for basket in &log.baskets {
        let user = log.vocab.user_name(basket.user).expect("registered user");
        for &item in &basket.items {
            let item = log.vocab.item_name(item).expect("registered item");
            writeln!(w, "{user},{},{item}", basket.basket_id).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Partition baskets into train/test uniformly at random, then rebalance
/// so every test user keeps at least one train basket where possible.
///
/// Rule: a user whose baskets all landed in test keeps exactly one basket
/// in test (the one with the lowest original index) if they own two or
/// more baskets, and moves entirely back to train otherwise.
pub fn split_holdout(
    log: &TransactionLog,
    test_fraction: f64,
    seed: u64,
) -> Result<(TransactionLog, TransactionLog)> {
    let total = log.baskets.len();
    if total < 2 {
        return Err(Error::DegenerateSplit {
            fraction: test_fraction,
            baskets: total,
        });
    }
    let want_test = (test_fraction * total as f64).round() as usize;
    if want_test == 0 || want_test >= total {
        return Err(Error::DegenerateSplit {
            fraction: test_fraction,
            baskets: total,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);

    let mut in_test = vec![false; total];
    for &idx in order.iter().take(want_test) {
        in_test[idx] = true;
    }

    // Rebalance users whose every basket fell into test: a multi-basket
    // user keeps only their lowest-index basket in test, a single-basket
    // user moves entirely back to train.
    let mut user_baskets: HashMap<u32, Vec<usize>> = HashMap::new();
    for (idx, b) in log.baskets.iter().enumerate() {
        user_baskets.entry(b.user).or_default().push(idx);
    }
    for indices in user_baskets.values() {
        if !indices.iter().all(|&i| in_test[i]) {
            continue;
        }
        let keep_in_test = indices.len() >= 2;
        for (pos, &i) in indices.iter().enumerate() {
            if !(keep_in_test && pos == 0) {
                in_test[i] = false;
            }
        }
    }

    let pick = |flag: bool| TransactionLog {
        baskets: log
            .baskets
            .iter()
            .enumerate()
            .filter(|(i, _)| in_test[*i] == flag)
            .map(|(_, b)| b.clone())
            .collect(),
        vocab: log.vocab.clone(),
    };
    Ok((pick(false), pick(true)))
}

/// Per-item (or per-user) basket-level occurrence counts with a
/// deterministic popularity ranking.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    rank_to_id: Vec<u32>,
}

impl FrequencyTable {
    fn from_counts(counts: Vec<u64>) -> Self {
        let mut rank_to_id: Vec<u32> = (0..counts.len() as u32).collect();
        // Descending count, ties broken by ascending dense id.
        rank_to_id.sort_by_key(|&id| (std::cmp::Reverse(counts[id as usize]), id));
        FrequencyTable { counts, rank_to_id }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Ids ordered from most to least frequent.
    pub fn ranked(&self) -> &[u32] {
        &self.rank_to_id
    }

    /// Most frequent ids, minus exclusions, paired with their counts.
    pub fn top_k(&self, k: usize, exclude: &[u32]) -> Vec<(u32, f64)> {
        self.rank_to_id
            .iter()
            .filter(|id| !exclude.contains(id))
            .take(k)
            .map(|&id| (id, self.counts[id as usize] as f64))
            .collect()
    }
}

const FREQ_MAGIC: &[u8; 4] = b"T2VP";
const FREQ_VERSION: u32 = 1;

impl FrequencyTable {
    /// Write the counts as a popularity sidecar: magic "T2VP", version
    /// u32, n u64, then n little-endian u64 counts.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        use byteorder::{LittleEndian, WriteBytesExt};
        use std::io::Write;
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);
        w.write_all(FREQ_MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(FREQ_VERSION).map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.counts.len() as u64).map_err(io_err)?;
        for &c in &self.counts {
            w.write_u64::<LittleEndian>(c).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        use byteorder::{LittleEndian, ReadBytesExt};
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = std::io::BufReader::new(file);
        let trunc = |what: &str| Error::Format(format!("popularity file truncated in {what}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| trunc("magic"))?;
        if &magic != FREQ_MAGIC {
            return Err(Error::Format(format!(
                "bad popularity magic {magic:?}, expected {FREQ_MAGIC:?}"
            )));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| trunc("header"))?;
        if version != FREQ_VERSION {
            return Err(Error::Format(format!("unsupported popularity version {version}")));
        }
        let n = r.read_u64::<LittleEndian>().map_err(|_| trunc("header"))? as usize;
        let mut counts = vec![0u64; n];
        r.read_u64_into::<LittleEndian>(&mut counts)
            .map_err(|_| trunc("counts"))?;
        Ok(FrequencyTable::from_counts(counts))
    }

    /// Uniform zero counts: a last-resort popularity table that ranks
    /// purely by dense id.
    pub fn uniform(n: usize) -> Self {
        FrequencyTable::from_counts(vec![0; n])
    }
}

/// Count, per item, the number of baskets containing it.
pub fn item_frequencies(log: &TransactionLog) -> FrequencyTable {
    let mut counts = vec![0u64; log.item_count()];
    for basket in &log.baskets {
        for &item in &basket.items {
            counts[item as usize] += 1;
        }
    }
    FrequencyTable::from_counts(counts)
}

/// Count, per user, the number of baskets they own.
pub fn user_frequencies(log: &TransactionLog) -> FrequencyTable {
    let mut counts = vec![0u64; log.user_count()];
    for basket in &log.baskets {
        counts[basket.user as usize] += 1;
    }
    FrequencyTable::from_counts(counts)
}

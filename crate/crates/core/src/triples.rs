//! Training-triple generation and log-uniform negative sampling.
//!
//! A triple is a user plus an ordered pair of distinct items the user
//! bought in one basket. Triples are drawn by first choosing a basket
//! uniformly among baskets with at least two items, then an ordered pair
//! uniformly within it, so large baskets do not dominate per-triple.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{FrequencyTable, TransactionLog};
use crate::error::{Error, Result};

/// One (user, item, item) training example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triple {
    pub user: u32,
    pub item_a: u32,
    pub item_b: u32,
}

/// Draw exactly `count` triples from the log, deterministically per seed.
pub fn sample_triples(log: &TransactionLog, count: usize, seed: u64) -> Result<Vec<Triple>> {
    let eligible: Vec<usize> = log
        .baskets
        .iter()
        .enumerate()
        .filter(|(_, b)| b.len() >= 2)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleBasket);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::with_capacity(count);
    for _ in 0..count {
        let basket = &log.baskets[eligible[rng.random_range(0..eligible.len())]];
        let n = basket.len();
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        triples.push(Triple {
            user: basket.user,
            item_a: basket.items[a],
            item_b: basket.items[b],
        });
    }
    Ok(triples)
}

/// Log-uniform (Zipf) sampler over frequency ranks.
///
/// Rank `r` (0 = most frequent) is drawn with probability
/// `(ln(r+2) - ln(r+1)) / ln(N+1)`, which is strictly decreasing in `r`
/// and sums to one. Sampling inverts the closed-form CDF, so a draw is
/// a single uniform variate.
#[derive(Clone, Debug)]
pub struct ZipfSampler {
    rank_to_id: Vec<u32>,
    id_to_rank: Vec<u32>,
    ln_n_plus_1: f64,
}

impl ZipfSampler {
    pub fn new(freq: &FrequencyTable) -> Result<Self> {
        let n = freq.len();
        if n == 0 {
            return Err(Error::EmptyVocabulary);
        }
        let rank_to_id = freq.ranked().to_vec();
        let mut id_to_rank = vec![0u32; n];
        for (rank, &id) in rank_to_id.iter().enumerate() {
            id_to_rank[id as usize] = rank as u32;
        }
        Ok(ZipfSampler {
            rank_to_id,
            id_to_rank,
            ln_n_plus_1: ((n + 1) as f64).ln(),
        })
    }

    pub fn len(&self) -> usize {
        self.rank_to_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank_to_id.is_empty()
    }

    /// Probability of drawing rank `r`.
    pub fn prob_of_rank(&self, r: usize) -> f64 {
        debug_assert!(r < self.len());
        (((r + 2) as f64).ln() - ((r + 1) as f64).ln()) / self.ln_n_plus_1
    }

    /// Probability of drawing a specific id.
    pub fn prob_of_id(&self, id: u32) -> f64 {
        self.prob_of_rank(self.id_to_rank[id as usize] as usize)
    }

    /// One draw; returns an id.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let n = self.len();
        // Inverse CDF: CDF(r) = ln(r+2) / ln(N+1), so
        // r = floor(exp(u * ln(N+1))) - 1, clamped for float safety.
        let u: f64 = rng.random::<f64>();
        let r = ((u * self.ln_n_plus_1).exp().floor() as usize)
            .saturating_sub(1)
            .min(n - 1);
        self.rank_to_id[r]
    }

    /// Draw `k` ids, rejecting and redrawing any equal to `exclude`.
    /// Duplicates among the `k` are permitted.
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        k: usize,
        exclude: u32,
        rng: &mut R,
    ) -> Result<Vec<u32>> {
        if self.len() == 1 && self.rank_to_id[0] == exclude {
            return Err(Error::ExclusionImpossible);
        }
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let id = self.sample(rng);
            if id != exclude {
                out.push(id);
            }
        }
        Ok(out)
    }
}

const TRIPLE_MAGIC: &[u8; 4] = b"T2VT";
const TRIPLE_VERSION: u32 = 1;

/// Write a triple cache: magic "T2VT", version u32, count u64, then
/// `count` records of three little-endian u32 dense ids (user, a, b).
pub fn write_triple_cache(path: impl AsRef<Path>, triples: &[Triple]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(TRIPLE_MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(TRIPLE_VERSION).map_err(io_err)?;
    w.write_u64::<LittleEndian>(triples.len() as u64).map_err(io_err)?;
    for t in triples {
        w.write_u32::<LittleEndian>(t.user).map_err(io_err)?;
        w.write_u32::<LittleEndian>(t.item_a).map_err(io_err)?;
        w.write_u32::<LittleEndian>(t.item_b).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_triple_cache(path: impl AsRef<Path>) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("triple cache truncated before magic".into()))?;
    if &magic != TRIPLE_MAGIC {
        return Err(Error::Format(format!(
            "bad triple cache magic {magic:?}, expected {TRIPLE_MAGIC:?}"
        )));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("triple cache truncated in header".into()))?;
    if version != TRIPLE_VERSION {
        return Err(Error::Format(format!("unsupported triple cache version {version}")));
    }
    let count = r
        .read_u64::<LittleEndian>()
        .map_err(|_| Error::Format("triple cache truncated in header".into()))? as usize;
    let mut triples = Vec::with_capacity(count.min(1 << 24));
    for i in 0..count {
        let mut rec = [0u32; 3];
        for slot in rec.iter_mut() {
            *slot = r
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Format(format!("triple cache truncated at record {i}")))?;
        }
        triples.push(Triple {
            user: rec[0],
            item_a: rec[1],
            item_b: rec[2],
        });
    }
    Ok(triples)
}

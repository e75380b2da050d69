//! Mini-batch training of the embedding matrices.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{item_frequencies, user_frequencies, TransactionLog};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::nce::{build_nce_batch, nce_loss_and_grads, SparseGrads};
use crate::model::TripleModel;
use crate::triples::{Triple, ZipfSampler};

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Noise draws per NCE target.
    pub negatives: usize,
    /// Uniform init range; defaults to `0.5 / dim` when unset.
    pub init_scale: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            learning_rate: 1.0,
            batch_size: 1000,
            max_epochs: 100,
            negatives: 5,
            init_scale: None,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Format(format!("bad train config: {msg}")));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive and finite");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.negatives == 0 {
            return bad("negatives must be positive");
        }
        Ok(())
    }

    pub fn resolved_init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(0.5 / self.dim as f64)
    }
}

/// Per-epoch mean loss history.
#[derive(Clone, Debug, Default)]
pub struct TrainStats {
    pub epoch_losses: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam with lazy sparse row updates: moments advance only for rows that
/// received a gradient, bias correction uses the global step count.
struct Adam {
    m: Mat<f32>,
    v: Mat<f32>,
}

impl Adam {
    fn new(rows: usize, cols: usize) -> Self {
        Adam {
            m: Mat::zeros(rows, cols),
            v: Mat::zeros(rows, cols),
        }
    }

    fn step(&mut self, params: &mut Mat<f32>, grads: &std::collections::BTreeMap<u32, Vec<f64>>, alpha_t: f64) {
        for (&id, g) in grads {
            let row = params.row_mut(id as usize);
            let m = self.m.row_mut(id as usize);
            let v = self.v.row_mut(id as usize);
            for e in 0..row.len() {
                let grad = g[e];
                let m_new = BETA1 * m[e] as f64 + (1.0 - BETA1) * grad;
                let v_new = BETA2 * v[e] as f64 + (1.0 - BETA2) * grad * grad;
                m[e] = m_new as f32;
                v[e] = v_new as f32;
                row[e] = (row[e] as f64 - alpha_t * m_new / (v_new.sqrt() + EPS)) as f32;
            }
        }
    }
}

/// Train a model on pre-sampled triples.
///
/// Initialization, per-epoch shuffling, and noise draws all flow from a
/// single seeded generator, so single-threaded runs with the same inputs
/// are bit-identical.
pub fn train(
    log: &TransactionLog,
    triples: &[Triple],
    cfg: &TrainConfig,
) -> Result<(TripleModel<f32>, TrainStats)> {
    cfg.validate()?;
    let items = log.item_count();
    let users = log.user_count();
    if items == 0 || users == 0 {
        return Err(Error::EmptyVocabulary);
    }
    if triples.is_empty() && cfg.max_epochs > 0 {
        return Err(Error::EmptyTriples);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model =
        TripleModel::<f32>::init_random(items, users, cfg.dim, cfg.resolved_init_scale(), &mut rng);

    if cfg.max_epochs == 0 {
        return Ok((model, TrainStats::default()));
    }

    let item_noise = ZipfSampler::new(&item_frequencies(log))?;
    let user_noise = ZipfSampler::new(&user_frequencies(log))?;

    let mut adam_anchor = Adam::new(items, cfg.dim);
    let mut adam_dual = Adam::new(items, cfg.dim);
    let mut adam_user = Adam::new(users, cfg.dim);
    let mut step: u64 = 0;

    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut stats = TrainStats::default();
    let mut scratch: Vec<Triple> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            scratch.clear();
            scratch.extend(chunk.iter().map(|&i| triples[i]));
            let batch = build_nce_batch(&scratch, cfg.negatives, &item_noise, &user_noise, &mut rng)?;
            let (loss, grads): (f64, SparseGrads) = nce_loss_and_grads(&model, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            step += 1;
            let t = step as f64;
            let alpha_t =
                cfg.learning_rate * (1.0 - BETA2.powf(t)).sqrt() / (1.0 - BETA1.powf(t));
            adam_anchor.step(model.anchor_matrix_mut(), &grads.anchor, alpha_t);
            adam_dual.step(model.dual_matrix_mut(), &grads.dual, alpha_t);
            adam_user.step(model.user_matrix_mut(), &grads.user, alpha_t);
            epoch_loss += loss * chunk.len() as f64;
        }
        let mean = epoch_loss / triples.len() as f64;
        stats.epoch_losses.push(mean);
        log::info!("epoch {:>3}: loss {:.6}", epoch + 1, mean);
        if !model.all_finite() {
            return Err(Error::NonFiniteModel { epoch });
        }
    }
    Ok((model, stats))
}

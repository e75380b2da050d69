//! Noise-contrastive estimation of the triple likelihood.
//!
//! Each triple (u, i, j) contributes three terms: predicting i given
//! (j, u), j given (i, u), and u given (i, j). A term discriminates the
//! true target from `k` noise draws with the log-partition correction:
//! the true target with score `s` contributes `ln σ(s - ln(k·Pn(t)))`,
//! each noise draw `ln σ(-(s' - ln(k·Pn(t'))))`, where scores substitute
//! the candidate into the cohesion score's target slot. The loss is the
//! negated mean over terms.
//!
//! Noise is drawn once per batch so the loss is a pure function of the
//! model given the batch, which is what lets the finite-difference
//! oracle in the tests probe the analytic gradients.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::Result;
use crate::linalg::{add_rows_f64, dot, Scalar};
use crate::model::TripleModel;
use crate::triples::{Triple, ZipfSampler};

/// A mini-batch with its frozen noise draws and log-partition corrections.
#[derive(Clone, Debug)]
pub struct NceBatch {
    pub triples: Vec<Triple>,
    pub negatives: usize,
    /// Flattened `negatives` noise ids per triple, with `ln(k·Pn(t))`.
    noise_anchor: Vec<(u32, f64)>,
    noise_dual: Vec<(u32, f64)>,
    noise_user: Vec<(u32, f64)>,
    /// `ln(k·Pn(target))` for the true target of each term, per triple.
    true_corr_anchor: Vec<f64>,
    true_corr_dual: Vec<f64>,
    true_corr_user: Vec<f64>,
}

impl NceBatch {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// Draw noise for a batch of triples. Item terms use the item sampler,
/// the user term uses the user sampler; the true target is always
/// excluded from its own noise draws.
pub fn build_nce_batch<R: Rng + ?Sized>(
    triples: &[Triple],
    negatives: usize,
    item_noise: &ZipfSampler,
    user_noise: &ZipfSampler,
    rng: &mut R,
) -> Result<NceBatch> {
    assert!(negatives >= 1, "NCE needs at least one noise draw per target");
    let k = negatives;
    let kf = k as f64;
    let mut batch = NceBatch {
        triples: triples.to_vec(),
        negatives: k,
        noise_anchor: Vec::with_capacity(k * triples.len()),
        noise_dual: Vec::with_capacity(k * triples.len()),
        noise_user: Vec::with_capacity(k * triples.len()),
        true_corr_anchor: Vec::with_capacity(triples.len()),
        true_corr_dual: Vec::with_capacity(triples.len()),
        true_corr_user: Vec::with_capacity(triples.len()),
    };
    for t in triples {
        for id in item_noise.sample_negatives(k, t.item_a, rng)? {
            batch.noise_anchor.push((id, (kf * item_noise.prob_of_id(id)).ln()));
        }
        for id in item_noise.sample_negatives(k, t.item_b, rng)? {
            batch.noise_dual.push((id, (kf * item_noise.prob_of_id(id)).ln()));
        }
        for id in user_noise.sample_negatives(k, t.user, rng)? {
            batch.noise_user.push((id, (kf * user_noise.prob_of_id(id)).ln()));
        }
        batch.true_corr_anchor.push((kf * item_noise.prob_of_id(t.item_a)).ln());
        batch.true_corr_dual.push((kf * item_noise.prob_of_id(t.item_b)).ln());
        batch.true_corr_user.push((kf * user_noise.prob_of_id(t.user)).ln());
    }
    Ok(batch)
}

/// Numerically stable `ln σ(x) = -softplus(-x)`.
#[inline]
fn ln_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Plain loss evaluation, written as the direct transcription of the
/// term definition. Kept deliberately simple: the fused implementation
/// in [`nce_loss_and_grads`] is checked against it.
pub fn nce_loss<S: Scalar>(model: &TripleModel<S>, batch: &NceBatch) -> f64 {
    let k = batch.negatives;
    let mut total = 0.0;
    for (t_idx, t) in batch.triples.iter().enumerate() {
        let noise = |v: &[(u32, f64)]| v[t_idx * k..(t_idx + 1) * k].to_vec();

        // Predict the anchor item given (j, u).
        let score_a = |cand: u32| {
            dot(model.anchor(cand), model.dual(t.item_b))
                + dot(model.anchor(cand), model.user(t.user))
                + dot(model.dual(t.item_b), model.user(t.user))
        };
        total += ln_sigmoid(score_a(t.item_a) - batch.true_corr_anchor[t_idx]);
        for (id, corr) in noise(&batch.noise_anchor) {
            total += ln_sigmoid(-(score_a(id) - corr));
        }

        // Predict the dual item given (i, u).
        let score_d = |cand: u32| {
            dot(model.anchor(t.item_a), model.dual(cand))
                + dot(model.anchor(t.item_a), model.user(t.user))
                + dot(model.dual(cand), model.user(t.user))
        };
        total += ln_sigmoid(score_d(t.item_b) - batch.true_corr_dual[t_idx]);
        for (id, corr) in noise(&batch.noise_dual) {
            total += ln_sigmoid(-(score_d(id) - corr));
        }

        // Predict the user given (i, j).
        let score_u = |cand: u32| {
            dot(model.anchor(t.item_a), model.dual(t.item_b))
                + dot(model.anchor(t.item_a), model.user(cand))
                + dot(model.dual(t.item_b), model.user(cand))
        };
        total += ln_sigmoid(score_u(t.user) - batch.true_corr_user[t_idx]);
        for (id, corr) in noise(&batch.noise_user) {
            total += ln_sigmoid(-(score_u(id) - corr));
        }
    }
    -total / (3.0 * batch.len() as f64)
}

/// Gradients for the rows a batch touches; rows absent from the maps
/// have an exactly-zero gradient.
#[derive(Clone, Debug, Default)]
pub struct SparseGrads {
    pub anchor: BTreeMap<u32, Vec<f64>>,
    pub dual: BTreeMap<u32, Vec<f64>>,
    pub user: BTreeMap<u32, Vec<f64>>,
}

impl SparseGrads {
    fn row(map: &mut BTreeMap<u32, Vec<f64>>, id: u32, dim: usize) -> &mut Vec<f64> {
        map.entry(id).or_insert_with(|| vec![0.0; dim])
    }
}

#[inline]
fn axpy<S: Scalar>(dst: &mut [f64], coef: f64, src: &[S]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += coef * s.as_f64();
    }
}

#[inline]
fn axpy_f64(dst: &mut [f64], coef: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += coef * s;
    }
}

/// Fused loss and gradient pass over a batch.
pub fn nce_loss_and_grads<S: Scalar>(model: &TripleModel<S>, batch: &NceBatch) -> (f64, SparseGrads) {
    let dim = model.dim();
    let k = batch.negatives;
    let inv_terms = 1.0 / (3.0 * batch.len() as f64);
    let mut grads = SparseGrads::default();
    let mut total = 0.0;
    let mut ctx = vec![0.0f64; dim];

    for (t_idx, t) in batch.triples.iter().enumerate() {
        let span = t_idx * k..(t_idx + 1) * k;

        // Term 1: anchor slot. s(t) = p_t·(q_j + h_u) + q_j·h_u.
        {
            add_rows_f64(model.dual(t.item_b), model.user(t.user), &mut ctx);
            let base = dot(model.dual(t.item_b), model.user(t.user));
            let mut coef_sum = 0.0;
            let mut handle = |cand: u32, corr: f64, label: f64, total: &mut f64, grads: &mut SparseGrads| {
                let s: f64 = model
                    .anchor(cand)
                    .iter()
                    .zip(&ctx)
                    .map(|(p, c)| p.as_f64() * c)
                    .sum::<f64>()
                    + base;
                let a = s - corr;
                *total += if label > 0.5 { ln_sigmoid(a) } else { ln_sigmoid(-a) };
                let coef = (sigmoid(a) - label) * inv_terms;
                axpy_f64(SparseGrads::row(&mut grads.anchor, cand, dim), coef, &ctx);
                axpy(SparseGrads::row(&mut grads.dual, t.item_b, dim), coef, model.anchor(cand));
                axpy(SparseGrads::row(&mut grads.user, t.user, dim), coef, model.anchor(cand));
                coef_sum += coef;
            };
            handle(t.item_a, batch.true_corr_anchor[t_idx], 1.0, &mut total, &mut grads);
            for &(id, corr) in &batch.noise_anchor[span.clone()] {
                handle(id, corr, 0.0, &mut total, &mut grads);
            }
            axpy(SparseGrads::row(&mut grads.dual, t.item_b, dim), coef_sum, model.user(t.user));
            axpy(SparseGrads::row(&mut grads.user, t.user, dim), coef_sum, model.dual(t.item_b));
        }

        // Term 2: dual slot. s(t) = q_t·(p_i + h_u) + p_i·h_u.
        {
            add_rows_f64(model.anchor(t.item_a), model.user(t.user), &mut ctx);
            let base = dot(model.anchor(t.item_a), model.user(t.user));
            let mut coef_sum = 0.0;
            let mut handle = |cand: u32, corr: f64, label: f64, total: &mut f64, grads: &mut SparseGrads| {
                let s: f64 = model
                    .dual(cand)
                    .iter()
                    .zip(&ctx)
                    .map(|(q, c)| q.as_f64() * c)
                    .sum::<f64>()
                    + base;
                let a = s - corr;
                *total += if label > 0.5 { ln_sigmoid(a) } else { ln_sigmoid(-a) };
                let coef = (sigmoid(a) - label) * inv_terms;
                axpy_f64(SparseGrads::row(&mut grads.dual, cand, dim), coef, &ctx);
                axpy(SparseGrads::row(&mut grads.anchor, t.item_a, dim), coef, model.dual(cand));
                axpy(SparseGrads::row(&mut grads.user, t.user, dim), coef, model.dual(cand));
                coef_sum += coef;
            };
            handle(t.item_b, batch.true_corr_dual[t_idx], 1.0, &mut total, &mut grads);
            for &(id, corr) in &batch.noise_dual[span.clone()] {
                handle(id, corr, 0.0, &mut total, &mut grads);
            }
            axpy(SparseGrads::row(&mut grads.anchor, t.item_a, dim), coef_sum, model.user(t.user));
            axpy(SparseGrads::row(&mut grads.user, t.user, dim), coef_sum, model.anchor(t.item_a));
        }

        // Term 3: user slot. s(t) = h_t·(p_i + q_j) + p_i·q_j.
        {
            add_rows_f64(model.anchor(t.item_a), model.dual(t.item_b), &mut ctx);
            let base = dot(model.anchor(t.item_a), model.dual(t.item_b));
            let mut coef_sum = 0.0;
            let mut handle = |cand: u32, corr: f64, label: f64, total: &mut f64, grads: &mut SparseGrads| {
                let s: f64 = model
                    .user(cand)
                    .iter()
                    .zip(&ctx)
                    .map(|(h, c)| h.as_f64() * c)
                    .sum::<f64>()
                    + base;
                let a = s - corr;
                *total += if label > 0.5 { ln_sigmoid(a) } else { ln_sigmoid(-a) };
                let coef = (sigmoid(a) - label) * inv_terms;
                axpy_f64(SparseGrads::row(&mut grads.user, cand, dim), coef, &ctx);
                axpy(SparseGrads::row(&mut grads.anchor, t.item_a, dim), coef, model.user(cand));
                axpy(SparseGrads::row(&mut grads.dual, t.item_b, dim), coef, model.user(cand));
                coef_sum += coef;
            };
            handle(t.user, batch.true_corr_user[t_idx], 1.0, &mut total, &mut grads);
            for &(id, corr) in &batch.noise_user[span] {
                handle(id, corr, 0.0, &mut total, &mut grads);
            }
            axpy(SparseGrads::row(&mut grads.anchor, t.item_a, dim), coef_sum, model.dual(t.item_b));
            axpy(SparseGrads::row(&mut grads.dual, t.item_b, dim), coef_sum, model.anchor(t.item_a));
        }
    }
    (-total * inv_terms, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{item_frequencies, user_frequencies, Basket, TransactionLog, Vocabulary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_log(items: usize, users: usize, seed: u64) -> TransactionLog {
        let mut vocab = Vocabulary::new();
        for u in 0..users {
            vocab.intern_user(&format!("u{u}"));
        }
        for i in 0..items {
            vocab.intern_item(&format!("i{i}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let baskets = (0..users * 3)
            .map(|b| {
                let size = rng.random_range(2..=4.min(items));
                let items: Vec<u32> = (0..size).map(|_| rng.random_range(0..items as u32)).collect();
                Basket::new((b % users) as u32, format!("b{b}"), items)
            })
            .filter(|b| b.len() >= 2)
            .collect();
        TransactionLog { baskets, vocab }
    }

    fn samplers(log: &TransactionLog) -> (ZipfSampler, ZipfSampler) {
        (
            ZipfSampler::new(&item_frequencies(log)).unwrap(),
            ZipfSampler::new(&user_frequencies(log)).unwrap(),
        )
    }

    fn toy_batch(log: &TransactionLog, triples: usize, k: usize, seed: u64) -> NceBatch {
        let triples = crate::triples::sample_triples(log, triples, seed).unwrap();
        let (item_noise, user_noise) = samplers(log);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
        build_nce_batch(&triples, k, &item_noise, &user_noise, &mut rng).unwrap()
    }

    #[test]
    fn zero_model_loss_has_closed_form() {
        // At the zero point every score is zero, so each logistic argument
        // is -ln(k·Pn(t)): σ(-ln p) = 1/(1+p) and σ(ln p) = p/(1+p).
        let log = toy_log(6, 3, 1);
        let (item_noise, user_noise) = samplers(&log);
        let batch = toy_batch(&log, 4, 1, 2);
        let model = TripleModel::<f64>::zeros(6, 3, 5);

        let mut expected = 0.0;
        for (t_idx, t) in batch.triples.iter().enumerate() {
            for (sampler, target, noise) in [
                (&item_noise, t.item_a, &batch.noise_anchor[t_idx..t_idx + 1]),
                (&item_noise, t.item_b, &batch.noise_dual[t_idx..t_idx + 1]),
                (&user_noise, t.user, &batch.noise_user[t_idx..t_idx + 1]),
            ] {
                let p = sampler.prob_of_id(target); // k = 1
                expected += (1.0 / (1.0 + p)).ln();
                for &(id, _) in noise {
                    let pn = sampler.prob_of_id(id);
                    expected += (pn / (1.0 + pn)).ln();
                }
            }
        }
        expected = -expected / (3.0 * batch.len() as f64);

        assert!((nce_loss(&model, &batch) - expected).abs() < 1e-12);
        let (fused, _) = nce_loss_and_grads(&model, &batch);
        assert!((fused - expected).abs() < 1e-12);
    }

    #[test]
    fn fused_loss_matches_plain_loss() {
        let log = toy_log(8, 4, 3);
        let batch = toy_batch(&log, 6, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = TripleModel::<f64>::init_random(8, 4, 4, 0.6, &mut rng);
        let plain = nce_loss(&model, &batch);
        let (fused, _) = nce_loss_and_grads(&model, &batch);
        assert!((plain - fused).abs() < 1e-12 * plain.abs().max(1.0));
    }

    #[test]
    fn untouched_rows_have_no_gradient() {
        let mut vocab = Vocabulary::new();
        for u in 0..3 {
            vocab.intern_user(&format!("u{u}"));
        }
        for i in 0..10 {
            vocab.intern_item(&format!("i{i}"));
        }
        let log = TransactionLog {
            baskets: vec![Basket::new(0, "b0", vec![0, 1]), Basket::new(1, "b1", vec![1, 2])],
            vocab,
        };
        let batch = toy_batch(&log, 3, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = TripleModel::<f64>::init_random(10, 3, 4, 0.5, &mut rng);
        let (_, grads) = nce_loss_and_grads(&model, &batch);

        let mut touched_items: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
        let mut touched_users: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
        for (t_idx, t) in batch.triples.iter().enumerate() {
            touched_items.extend([t.item_a, t.item_b]);
            touched_users.insert(t.user);
            let span = t_idx * batch.negatives..(t_idx + 1) * batch.negatives;
            touched_items.extend(batch.noise_anchor[span.clone()].iter().map(|&(id, _)| id));
            touched_items.extend(batch.noise_dual[span.clone()].iter().map(|&(id, _)| id));
            touched_users.extend(batch.noise_user[span].iter().map(|&(id, _)| id));
        }
        for id in grads.anchor.keys().chain(grads.dual.keys()) {
            assert!(touched_items.contains(id), "item row {id} should be untouched");
        }
        for id in grads.user.keys() {
            assert!(touched_users.contains(id), "user row {id} should be untouched");
        }
    }

    /// Central finite differences over every parameter, compared to the
    /// analytic gradients by whole-gradient L2 relative error.
    fn finite_difference_check<S: Scalar>(
        model: &mut TripleModel<S>,
        batch: &NceBatch,
        step: f64,
    ) -> f64 {
        let (_, grads) = nce_loss_and_grads(model, batch);
        let mut diff_sq = 0.0;
        let mut fd_sq = 0.0;
        let mut an_sq = 0.0;
        for select in 0..3usize {
            let rows = match select {
                0 => model.anchor_matrix().rows(),
                1 => model.dual_matrix().rows(),
                _ => model.user_matrix().rows(),
            };
            let cols = model.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let read = |m: &TripleModel<S>| match select {
                        0 => m.anchor_matrix().row(r)[c],
                        1 => m.dual_matrix().row(r)[c],
                        _ => m.user_matrix().row(r)[c],
                    };
                    let write = |m: &mut TripleModel<S>, v: S| match select {
                        0 => m.anchor_matrix_mut().row_mut(r)[c] = v,
                        1 => m.dual_matrix_mut().row_mut(r)[c] = v,
                        _ => m.user_matrix_mut().row_mut(r)[c] = v,
                    };
                    let orig = read(model);
                    let plus = S::from_f64(orig.as_f64() + step);
                    let minus = S::from_f64(orig.as_f64() - step);
                    write(model, plus);
                    let lp = nce_loss(model, batch);
                    write(model, minus);
                    let lm = nce_loss(model, batch);
                    write(model, orig);
                    let fd = (lp - lm) / (plus.as_f64() - minus.as_f64());
                    let grad_map = match select {
                        0 => &grads.anchor,
                        1 => &grads.dual,
                        _ => &grads.user,
                    };
                    let an = grad_map.get(&(r as u32)).map(|g| g[c]).unwrap_or(0.0);
                    diff_sq += (fd - an) * (fd - an);
                    fd_sq += fd * fd;
                    an_sq += an * an;
                }
            }
        }
        diff_sq.sqrt() / fd_sq.sqrt().max(an_sq.sqrt()).max(1e-12)
    }

    #[test]
    fn gradients_match_finite_differences_f64() {
        let log = toy_log(10, 4, 11);
        for seed in 0..8u64 {
            let batch = toy_batch(&log, 2, 2, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = TripleModel::<f64>::init_random(10, 4, 3, 0.7, &mut rng);
            let rel = finite_difference_check(&mut model, &batch, 1e-5);
            assert!(rel < 1e-6, "seed {seed}: relative error {rel}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_f32() {
        let log = toy_log(8, 3, 13);
        for seed in 0..4u64 {
            let batch = toy_batch(&log, 3, 2, 200 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut model = TripleModel::<f32>::init_random(8, 3, 4, 0.6, &mut rng);
            let rel = finite_difference_check(&mut model, &batch, 1e-5);
            assert!(rel < 1e-4, "seed {seed}: relative error {rel}");
        }
    }
}

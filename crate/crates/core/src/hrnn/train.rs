//! Pretraining on induced chunk labels: Adam with warm-up then linear
//! decay, mini-batches with per-sentence gradients computed in parallel and
//! reduced in sentence order, optional per-epoch validation F1.

use super::{backward, decode_tags, forward, pretrain_loss_seeds, GateMode, Gradients, HrnnError, HrnnParams};
use crate::corpus::{Sentence, TagSeq};
use crate::embeddings::Provider;
use crate::eval::evaluate;
use crate::opt::{Adam, AdamConfig};
use crate::par;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub force_first_cut: bool,
    /// Gate threshold used when decoding for validation F1.
    pub threshold: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 0.01,
            seed: 0,
            force_first_cut: true,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub epochs: Vec<EpochRecord>,
}

/// Predicts tags for each sentence with the gold sequence's `O` mask.
pub fn chunk_corpus(
    params: &HrnnParams,
    provider: &Provider,
    items: &[(Sentence, TagSeq)],
    threshold: f64,
    force_first_cut: bool,
) -> Result<Vec<TagSeq>, HrnnError> {
    par::map_ordered(items, |(sentence, gold)| {
        let x = provider.embed(sentence)?;
        let trace = forward(params, &x, GateMode::Soft, force_first_cut)?;
        Ok(decode_tags(&trace, threshold, &gold.o_mask()))
    })
    .into_iter()
    .collect()
}

struct SentencePass {
    loss: f64,
    grads: Gradients,
    lookup_rows: Option<Vec<usize>>,
}

fn sentence_pass(
    params: &HrnnParams,
    provider: &Provider,
    sentence: &Sentence,
    target: &TagSeq,
    force_first_cut: bool,
) -> Result<SentencePass, HrnnError> {
    let x = provider.embed(sentence)?;
    let trace = forward(params, &x, GateMode::Soft, force_first_cut)?;
    let (loss, seeds) = pretrain_loss_seeds(&trace, target)?;
    let grads = backward(params, &x, &trace, &seeds)?;
    Ok(SentencePass { loss, grads, lookup_rows: provider.lookup_rows(sentence) })
}

/// Flat view over the trainable state: HRNN parameters followed by the
/// lookup embedding table when the provider is trainable.
fn flatten_state(params: &HrnnParams, provider: &Provider) -> Vec<f64> {
    let mut flat = params.flatten();
    if let Provider::Lookup(t) = provider {
        flat.extend(t.table.iter());
    }
    flat
}

fn assign_state(params: &mut HrnnParams, provider: &mut Provider, flat: &[f64]) {
    let np = params.n_params();
    params.assign_from_flat(&flat[..np]);
    if let Provider::Lookup(t) = provider {
        t.table.as_slice_mut().unwrap().copy_from_slice(&flat[np..]);
    }
}

/// Trains in place; returns the per-epoch log.
pub fn train_pretrain(
    params: &mut HrnnParams,
    provider: &mut Provider,
    train: &[(Sentence, TagSeq)],
    val: Option<&[(Sentence, TagSeq)]>,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome, HrnnError> {
    assert!(!train.is_empty(), "training corpus must be non-empty");
    let batch_size = cfg.batch_size.max(1);
    let n_batches = train.len().div_ceil(batch_size);
    let total_steps = cfg.epochs * n_batches;
    let n_hrnn = params.n_params();
    let state_len = flatten_state(params, provider).len();
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, total_steps), state_len);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch_ids in order.chunks(batch_size) {
            step += 1;
            let batch: Vec<&(Sentence, TagSeq)> = batch_ids.iter().map(|&i| &train[i]).collect();
            let passes = par::map_ordered(&batch, |(sentence, target)| {
                sentence_pass(params, provider, sentence, target, cfg.force_first_cut)
            });

            let mut grad_flat = vec![0.0; state_len];
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for pass in passes {
                let pass = pass?;
                batch_loss += pass.loss * scale;
                for (acc, g) in grad_flat[..n_hrnn].iter_mut().zip(pass.grads.params.flatten()) {
                    *acc += g * scale;
                }
                if let Some(rows) = pass.lookup_rows {
                    let d = params.d;
                    for (pos, row) in rows.into_iter().enumerate() {
                        let base = n_hrnn + row * d;
                        for (j, g) in pass.grads.input.row(pos).iter().enumerate() {
                            grad_flat[base + j] += g * scale;
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(HrnnError::Diverged { step });
            }
            epoch_loss += batch_loss;

            let mut state = flatten_state(params, provider);
            adam.step(&mut state, &grad_flat);
            assign_state(params, provider, &state);
        }
        let train_loss = epoch_loss / n_batches as f64;
        let val_f1 = match val {
            Some(items) if !items.is_empty() => {
                let pred = chunk_corpus(params, provider, items, cfg.threshold, cfg.force_first_cut)?;
                let gold: Vec<TagSeq> = items.iter().map(|(_, t)| t.clone()).collect();
                let report = evaluate(&gold, &pred).expect("predictions share gold masks");
                Some(report.f1)
            }
            _ => None,
        };
        log.push(EpochRecord { epoch, train_loss, val_f1 });
    }
    Ok(PretrainOutcome { epochs: log })
}

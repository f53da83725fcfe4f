//! Weakly supervised finetuning through a toy transduction task.
//!
//! A one-layer attention decoder reads the upper (chunk-level) states of the
//! encoder. Its attention logits are shifted by `gamma * gate_logit`, so
//! positions the gate marks as chunk boundaries receive more attention mass,
//! and the gradient of the task loss reaches the gate parameters through
//! both the states and the reweighting term.
//!
//! Left to itself, end-to-end training tends to park the gates near 0.5. An
//! auxiliary squared loss pushes the top fraction `kappa` of gate values
//! toward 1 and the rest toward 0; `kappa` doubles as a granularity dial.
//! The trained objective is `task_loss + eta * aux_loss`.

mod decoder;
mod task;
mod train;

pub use decoder::{seq_xent, DecoderParams, DecoderPass};
pub use task::{generate_examples, task_grammar, task_vocabulary, FinetuneExample, TaskKind, ToyTask};
pub use train::{
    finetune_loop, read_curves, write_curves, CurvePoint, FinetuneConfig, FinetuneOutcome,
};

use crate::corpus::OMask;
use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("bad finetune configuration: {reason}")]
    BadConfig { reason: String },
    #[error("target token {word:?} not in decoder vocabulary")]
    UnknownTargetToken { word: String },
    #[error("decoder dimension {dec} does not match encoder state dimension {enc}")]
    DimMismatch { dec: usize, enc: usize },
    #[error("non-finite attention input at encoder step {step}")]
    NonFinite { step: usize },
    #[error("finetuning diverged at step {step} (non-finite loss)")]
    Diverged { step: usize },
    #[error(transparent)]
    Hrnn(#[from] crate::hrnn::HrnnError),
    #[error(transparent)]
    Embedding(#[from] crate::embeddings::EmbeddingError),
    #[error(transparent)]
    Grammar(#[from] crate::grammar::GrammarError),
    #[error("curves file line {line}: {reason}")]
    CurvesParse { line: usize, reason: String },
}

/// Attention probabilities over encoder steps for one query: softmax of
/// `q . k_i / sqrt(d_k) + gamma * gate_logit_i`, computed stably by
/// subtracting the largest exponent.
pub fn reweighted_attention(
    q: ArrayView1<f64>,
    keys: &Array2<f64>,
    gate_logits: &[f64],
    gamma: f64,
) -> Result<Array1<f64>, FinetuneError> {
    let d_k = q.len() as f64;
    let scale = 1.0 / d_k.sqrt();
    let n = keys.nrows();
    let mut scores = Array1::zeros(n);
    for i in 0..n {
        let s = q.dot(&keys.row(i)) * scale + gamma * gate_logits[i];
        if !s.is_finite() {
            return Err(FinetuneError::NonFinite { step: i });
        }
        scores[i] = s;
    }
    Ok(stable_softmax(&scores))
}

pub(crate) fn stable_softmax(scores: &Array1<f64>) -> Array1<f64> {
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = scores.mapv(|s| (s - hi).exp());
    let total = out.sum();
    out /= total;
    out
}

/// Squared-error pressure on the gate values: the `round(kappa * n)` largest
/// gates (ties to the earlier step) are pulled toward 1, the rest toward 0.
/// Masked steps are skipped entirely. Returns the loss.
pub fn aux_loss(gates: &[f64], kappa: f64, o_mask: &OMask) -> f64 {
    aux_loss_grads(gates, kappa, o_mask).0
}

/// Loss plus its gradient with respect to each gate value. Membership in
/// the top set is treated as locally constant.
pub fn aux_loss_grads(gates: &[f64], kappa: f64, o_mask: &OMask) -> (f64, Vec<f64>) {
    let mut grads = vec![0.0; gates.len()];
    let active: Vec<usize> = (0..gates.len()).filter(|i| !o_mask.contains(i)).collect();
    if active.is_empty() {
        return (0.0, grads);
    }
    let k = (kappa * active.len() as f64).round() as usize;
    let k = k.min(active.len());
    let mut ranked = active.clone();
    // Descending by gate value; earlier step wins ties into the top set.
    ranked.sort_by(|&a, &b| gates[b].partial_cmp(&gates[a]).unwrap().then(a.cmp(&b)));
    let mut loss = 0.0;
    for (rank, &i) in ranked.iter().enumerate() {
        let target = if rank < k { 1.0 } else { 0.0 };
        let diff = gates[i] - target;
        loss += diff * diff;
        grads[i] = 2.0 * diff;
    }
    (loss, grads)
}

/// Number of gates the auxiliary loss pulls toward 1 for a given unmasked
/// count (round-half-up).
pub fn aux_top_count(n_unmasked: usize, kappa: f64) -> usize {
    ((kappa * n_unmasked as f64).round() as usize).min(n_unmasked)
}

/// Combined objective.
pub fn total_loss(task_loss: f64, aux: f64, eta: f64) -> f64 {
    task_loss + eta * aux
}

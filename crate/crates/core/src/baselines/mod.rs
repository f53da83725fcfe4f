//! Classical unsupervised chunkers: a pointwise-mutual-information chunker,
//! a Baum-Welch-trained HMM, and a chunker that thresholds the embedding
//! similarity of consecutive words.
//!
//! All three emit valid tag sequences: positions listed in the caller's
//! `O` mask are forced to `O` and the result is normalized (an `I` that
//! would start a chunk becomes `B`).

mod hmm;
mod lm;
mod pmi;

pub use hmm::{hmm_chunk, hmm_fit, select_state_tags, HmmFit, HmmModel};
pub use lm::lm_chunk;
pub use pmi::{pmi_chunk, pmi_fit, PmiModel};

use crate::corpus::{OMask, Tag, TagSeq};
use crate::embeddings::EmbeddingError;
use crate::eval::{evaluate, EvalError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("{k} hidden states cannot express a B/I distinction, need at least 2")]
    BadStateCount { k: usize },
    #[error("tag-map selection enumerates 2^k maps; k = {k} is too large (limit 16)")]
    TooManyStates { k: usize },
    #[error("model file line {line}: {reason}")]
    ModelParse { line: usize, reason: String },
    #[error("bad threshold grid {got:?}: expected lo:hi:step with step > 0")]
    BadGrid { got: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub(crate) fn masked_tagseq(tags: Vec<Tag>, o_mask: &OMask) -> TagSeq {
    TagSeq::masked_normalized(tags, o_mask)
}

/// `lo:hi:step` threshold grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl TauGrid {
    pub fn parse(text: &str) -> Result<Self, BaselineError> {
        let bad = || BaselineError::BadGrid { got: text.to_string() };
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let step: f64 = parts[2].parse().map_err(|_| bad())?;
        if step.is_nan() || step <= 0.0 || hi < lo {
            return Err(bad());
        }
        Ok(TauGrid { lo, hi, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut i = 0usize;
        loop {
            let v = self.lo + self.step * i as f64;
            if v > self.hi + 1e-12 {
                break;
            }
            out.push(v);
            i += 1;
        }
        out
    }
}

/// Picks the grid value maximizing validation phrase F1; smaller thresholds
/// win ties. `chunk_at` maps a threshold to predictions for the validation
/// sentences.
pub fn tune_tau<F>(grid: TauGrid, gold: &[TagSeq], mut chunk_at: F) -> Result<(f64, f64), BaselineError>
where
    F: FnMut(f64) -> Result<Vec<TagSeq>, BaselineError>,
{
    let mut best: Option<(f64, f64)> = None;
    for tau in grid.values() {
        let pred = chunk_at(tau)?;
        let report = evaluate(gold, &pred)?;
        let better = match best {
            None => true,
            Some((_, best_f1)) => report.f1 > best_f1,
        };
        if better {
            best = Some((tau, report.f1));
        }
    }
    best.ok_or(BaselineError::BadGrid { got: "empty grid".to_string() })
}

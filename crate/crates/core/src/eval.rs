//! Exact-span phrase F1 and tagging accuracy, following the CoNLL-2000
//! scoring conventions: counts are summed over the corpus (micro-average),
//! a predicted span is correct only on exact (start, end) match, and tag
//! accuracy is taken over non-`O` tokens.

use crate::corpus::{tags_to_spans, Tag, TagSeq};
use crate::par;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("sentence {index}: gold has {gold} tags, prediction has {pred}")]
    LengthMismatch { index: usize, gold: usize, pred: usize },
    #[error("sentence {index}: gold and prediction disagree on O at token {token}")]
    MaskMismatch { index: usize, token: usize },
    #[error("gold has {gold} sentences, prediction has {pred}")]
    CorpusMismatch { gold: usize, pred: usize },
}

/// Percentages are in [0, 100], printed with two decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tag_accuracy: f64,
    pub n_gold_spans: usize,
    pub n_pred_spans: usize,
    pub n_correct_spans: usize,
    pub n_correct_tags: usize,
    pub n_tags: usize,
    pub n_sentences: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "processed {} sentences, {} non-O tokens", self.n_sentences, self.n_tags)?;
        writeln!(
            f,
            "phrases: gold {}, predicted {}, correct {}",
            self.n_gold_spans, self.n_pred_spans, self.n_correct_spans
        )?;
        write!(
            f,
            "precision: {:.2}%; recall: {:.2}%; F1: {:.2}; tag accuracy: {:.2}%",
            self.precision, self.recall, self.f1, self.tag_accuracy
        )
    }
}

impl EvalReport {
    /// Machine-readable key-value form, one `key value` pair per line.
    pub fn to_kv(&self) -> String {
        format!(
            "precision {:.2}\nrecall {:.2}\nf1 {:.2}\ntag_accuracy {:.2}\n\
             n_gold_spans {}\nn_pred_spans {}\nn_correct_spans {}\n\
             n_correct_tags {}\nn_tags {}\nn_sentences {}\n",
            self.precision,
            self.recall,
            self.f1,
            self.tag_accuracy,
            self.n_gold_spans,
            self.n_pred_spans,
            self.n_correct_spans,
            self.n_correct_tags,
            self.n_tags,
            self.n_sentences
        )
    }
}

#[derive(Default, Clone, Copy)]
struct SentCounts {
    gold: usize,
    pred: usize,
    correct: usize,
    tags_correct: usize,
    tags_total: usize,
}

fn sentence_counts(gold: &TagSeq, pred: &TagSeq) -> SentCounts {
    let gold_spans = tags_to_spans(gold);
    let pred_spans = tags_to_spans(pred);
    // Both span lists are sorted by start; a linear merge finds exact matches.
    let mut correct = 0;
    let (mut gi, mut pi) = (0, 0);
    while gi < gold_spans.len() && pi < pred_spans.len() {
        let g = gold_spans.spans()[gi];
        let p = pred_spans.spans()[pi];
        if g == p {
            correct += 1;
            gi += 1;
            pi += 1;
        } else if g.start <= p.start {
            gi += 1;
        } else {
            pi += 1;
        }
    }
    let mut tags_correct = 0;
    let mut tags_total = 0;
    for (g, p) in gold.tags().iter().zip(pred.tags()) {
        if *g == Tag::O {
            continue;
        }
        tags_total += 1;
        if g == p {
            tags_correct += 1;
        }
    }
    SentCounts {
        gold: gold_spans.len(),
        pred: pred_spans.len(),
        correct,
        tags_correct,
        tags_total,
    }
}

/// Scores predictions against gold tags. Sentences must align pairwise, with
/// matching lengths and identical `O` positions.
pub fn evaluate(gold: &[TagSeq], pred: &[TagSeq]) -> Result<EvalReport, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::CorpusMismatch { gold: gold.len(), pred: pred.len() });
    }
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::LengthMismatch { index, gold: g.len(), pred: p.len() });
        }
        for (token, (gt, pt)) in g.tags().iter().zip(p.tags()).enumerate() {
            if (*gt == Tag::O) != (*pt == Tag::O) {
                return Err(EvalError::MaskMismatch { index, token });
            }
        }
    }

    let pairs: Vec<(&TagSeq, &TagSeq)> = gold.iter().zip(pred).collect();
    let per_sentence = par::map_ordered(&pairs, |(g, p)| sentence_counts(g, p));
    let mut total = SentCounts::default();
    for c in &per_sentence {
        total.gold += c.gold;
        total.pred += c.pred;
        total.correct += c.correct;
        total.tags_correct += c.tags_correct;
        total.tags_total += c.tags_total;
    }

    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let precision = pct(total.correct, total.pred);
    let recall = pct(total.correct, total.gold);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(EvalReport {
        precision,
        recall,
        f1,
        tag_accuracy: pct(total.tags_correct, total.tags_total),
        n_gold_spans: total.gold,
        n_pred_spans: total.pred,
        n_correct_spans: total.correct,
        n_correct_tags: total.tags_correct,
        n_tags: total.tags_total,
        n_sentences: gold.len(),
    })
}

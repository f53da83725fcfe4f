//! Unsupervised chunking toolkit.
//!
//! The pipeline this crate supports: fit or load a binary-branching PCFG,
//! parse raw text with Viterbi CYK, turn the parse trees into chunk labels
//! with branching heuristics, pretrain a two-level gated RNN chunker on
//! those labels, optionally finetune it through a toy sequence-transduction
//! task with gate-reweighted attention, and score everything with exact-span
//! phrase F1 and tagging accuracy.
//!
//! Corpus-level loops (EM expectation steps, batch gradients, chunking,
//! evaluation) run data-parallel over sentences when the `parallel` feature
//! is enabled (the default) and fall back to sequential iteration without
//! it. Per-sentence results are always reduced in sentence order, so output
//! is bit-identical regardless of worker count.

pub mod baselines;
pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod finetune;
pub mod grammar;
pub mod hrnn;
pub mod induction;
pub mod opt;
pub mod par;
pub mod tree;

mod util;

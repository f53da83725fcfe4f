//! Desk-scale transduction tasks over sentences sampled from a small
//! built-in grammar with clear chunk structure.
//!
//! * `copy` — target is the source sentence;
//! * `reverse` — target is the source reversed;
//! * `chunk-heads` — target is the first word of every chunk induced from
//!   the sentence's true parse tree. Solving it benefits from tracking
//!   where chunks begin, which is exactly what the gates express.

use super::FinetuneError;
use crate::corpus::{spans_to_tags, OMask, Sentence, TagSeq};
use crate::grammar::{sample_corpus, Pcfg};
use crate::induction::induce_left_branching;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Reverse,
    ChunkHeads,
}

impl TaskKind {
    pub fn parse(text: &str) -> Option<TaskKind> {
        match text {
            "copy" => Some(TaskKind::Copy),
            "reverse" => Some(TaskKind::Reverse),
            "chunk-heads" => Some(TaskKind::ChunkHeads),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::ChunkHeads => "chunk-heads",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ToyTask {
    pub kind: TaskKind,
    pub seed: u64,
}

/// One training example: a sentence, its reference chunk tags (from the
/// true parse tree), and the transduction target.
#[derive(Debug, Clone)]
pub struct FinetuneExample {
    pub sentence: Sentence,
    pub tags: TagSeq,
    pub target: Vec<String>,
}

/// The generating grammar: short noun-ish and verb-ish groups, one to three
/// words per chunk, vocabulary small enough for a desk-size decoder.
pub fn task_grammar() -> Pcfg {
    Pcfg::from_rules(
        &[("SENT", 1.0)],
        &[
            ("SENT", "GRP", "PRED", 1.0),
            ("GRP", "DT", "NN", 0.5),
            ("GRP", "MOD", "NN", 0.5),
            ("MOD", "DT", "JJ", 1.0),
            ("PRED", "VB", "GRP", 0.55),
            ("PRED", "ACT", "GRP", 0.45),
            ("ACT", "VB", "RB", 1.0),
        ],
        &[
            ("DT", "the", 0.5),
            ("DT", "a", 0.3),
            ("DT", "every", 0.2),
            ("JJ", "big", 0.4),
            ("JJ", "red", 0.3),
            ("JJ", "old", 0.3),
            ("NN", "cat", 0.25),
            ("NN", "dog", 0.25),
            ("NN", "house", 0.25),
            ("NN", "bird", 0.25),
            ("VB", "sees", 0.4),
            ("VB", "likes", 0.3),
            ("VB", "finds", 0.3),
            ("RB", "quickly", 0.5),
            ("RB", "happily", 0.5),
        ],
    )
    .expect("built-in grammar is well formed")
}

/// All words the decoder may need to emit for any task over the grammar.
pub fn task_vocabulary() -> Vec<String> {
    task_grammar().terminals().to_vec()
}

/// Samples `count` examples, deterministic per task seed. Sentence ids are
/// `prefix0, prefix1, ...` so train and eval sets can coexist in one
/// embedding table.
pub fn generate_examples(
    task: &ToyTask,
    count: usize,
    id_prefix: &str,
) -> Result<Vec<FinetuneExample>, FinetuneError> {
    let grammar = task_grammar();
    let sampled = sample_corpus(&grammar, task.seed, count, 2, 12)?;
    let mut out = Vec::with_capacity(count);
    for (i, s) in sampled.into_iter().enumerate() {
        let n = s.words.len();
        let chunks = induce_left_branching(&s.tree);
        let tags = spans_to_tags(&chunks, n, &OMask::new())
            .expect("induced chunks partition the sentence");
        let target = match task.kind {
            TaskKind::Copy => s.words.clone(),
            TaskKind::Reverse => s.words.iter().rev().cloned().collect(),
            TaskKind::ChunkHeads => chunks.spans().iter().map(|sp| s.words[sp.start].clone()).collect(),
        };
        let sentence = Sentence::from_words(format!("{id_prefix}{i}"), &s.words);
        out.push(FinetuneExample { sentence, tags, target });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tags_to_spans, Tag};

    #[test]
    fn grammar_is_valid_and_samples() {
        let g = task_grammar();
        g.validate().unwrap();
        let task = ToyTask { kind: TaskKind::Copy, seed: 5 };
        let examples = generate_examples(&task, 10, "t").unwrap();
        assert_eq!(examples.len(), 10);
        for e in &examples {
            assert!(e.sentence.len() >= 2);
            assert_eq!(e.target, e.sentence.forms().iter().map(|s| s.to_string()).collect::<Vec<_>>());
            assert!(e.tags.tags().iter().all(|t| *t != Tag::O));
        }
    }

    #[test]
    fn chunk_heads_are_span_starts() {
        let task = ToyTask { kind: TaskKind::ChunkHeads, seed: 9 };
        let examples = generate_examples(&task, 20, "t").unwrap();
        for e in &examples {
            let spans = tags_to_spans(&e.tags);
            assert_eq!(e.target.len(), spans.len());
            for (w, span) in e.target.iter().zip(spans.spans()) {
                assert_eq!(w, e.sentence.forms()[span.start]);
            }
        }
    }

    #[test]
    fn reverse_reverses() {
        let task = ToyTask { kind: TaskKind::Reverse, seed: 2 };
        let examples = generate_examples(&task, 5, "t").unwrap();
        for e in &examples {
            let mut forward: Vec<String> = e.sentence.forms().iter().map(|s| s.to_string()).collect();
            forward.reverse();
            assert_eq!(e.target, forward);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let task = ToyTask { kind: TaskKind::Copy, seed: 13 };
        let a = generate_examples(&task, 8, "x").unwrap();
        let b = generate_examples(&task, 8, "x").unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.sentence, v.sentence);
            assert_eq!(u.target, v.target);
        }
    }
}

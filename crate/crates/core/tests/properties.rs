//! Cross-module invariants checked on generated inputs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;
use uchunk_core::baselines::{hmm_fit, hmm_chunk, lm_chunk, pmi_chunk, pmi_fit};
use uchunk_core::corpus::{
    read_conll2000, spans_to_tags, tags_to_spans, write_conll2000, ChunkSet, ChunkSpan, OMask,
    Sentence, Tag, TagSeq,
};
use uchunk_core::embeddings::Provider;
use uchunk_core::finetune::{aux_loss_grads, aux_top_count, reweighted_attention};
use uchunk_core::induction::{induce_left_branching, induce_right_branching, induce_small_chunks};
use uchunk_core::tree::random_tree;

fn arb_tags(max_len: usize) -> impl Strategy<Value = TagSeq> {
    prop::collection::vec(prop::sample::select(vec![Tag::B, Tag::I, Tag::O]), 1..max_len)
        .prop_map(|raw| TagSeq::normalized(raw).0)
}

fn arb_words(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-f]{1,3}", 1..max_len)
}

proptest! {
    #[test]
    fn conll_write_read_round_trip(
        data in prop::collection::vec((arb_words(8), any::<u64>()), 1..6)
    ) {
        // Build aligned (sentence, tags) pairs; tag count must match length.
        let items: Vec<(Sentence, TagSeq)> = data
            .into_iter()
            .enumerate()
            .map(|(i, (words, seed))| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let raw: Vec<Tag> = (0..words.len())
                    .map(|_| match rand::Rng::random_range(&mut rng, 0..3) {
                        0 => Tag::B,
                        1 => Tag::I,
                        _ => Tag::O,
                    })
                    .collect();
                (Sentence::from_words(i.to_string(), &words), TagSeq::normalized(raw).0)
            })
            .collect();
        let text = write_conll2000(&items);
        let read = read_conll2000(&text).unwrap();
        prop_assert_eq!(read.normalized, 0, "writer emits already-normalized tags");
        prop_assert_eq!(read.items.len(), items.len());
        for ((s0, t0), (s1, t1)) in items.iter().zip(&read.items) {
            prop_assert_eq!(s0.forms(), s1.forms());
            prop_assert_eq!(t0.tags(), t1.tags());
        }
        // Writing again is a fixed point.
        prop_assert_eq!(write_conll2000(&read.items), text);
    }

    #[test]
    fn tags_spans_inverse(tags in arb_tags(24)) {
        let spans = tags_to_spans(&tags);
        let back = spans_to_tags(&spans, tags.len(), &tags.o_mask()).unwrap();
        prop_assert_eq!(back, tags);
    }

    #[test]
    fn spans_tags_inverse(seed in any::<u64>(), n in 1usize..24) {
        // Random segmentation of 0..n with random masked singletons.
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut spans = Vec::new();
        let mut mask = OMask::new();
        let mut start = 0;
        while start < n {
            let end = (start + rand::Rng::random_range(&mut rng, 0..3usize)).min(n - 1);
            if rand::Rng::random_range(&mut rng, 0..4usize) == 0 {
                for i in start..=end {
                    mask.insert(i);
                }
            } else {
                spans.push(ChunkSpan::new(start, end));
            }
            start = end + 1;
        }
        let chunks = ChunkSet::new(spans).unwrap();
        let tags = spans_to_tags(&chunks, n, &mask).unwrap();
        prop_assert_eq!(tags_to_spans(&tags), chunks);
    }

    #[test]
    fn heuristics_partition_leaves(seed in any::<u64>(), n in 1usize..50) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let tree = random_tree(n, &mut rng);
        for induce in [induce_left_branching, induce_right_branching, induce_small_chunks] {
            let chunks = induce(&tree);
            let mut covered = BTreeSet::new();
            for span in chunks.spans() {
                for i in span.start..=span.end {
                    prop_assert!(covered.insert(i), "leaf {} covered twice", i);
                }
            }
            prop_assert_eq!(covered.len(), n, "not a partition");
        }
    }

    #[test]
    fn aux_top_set_cardinality(gates_seed in any::<u64>(), n in 1usize..200, kappa in 0.0f64..=1.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(gates_seed);
        let gates: Vec<f64> = (0..n)
            .map(|_| 0.01 + 0.98 * rand::Rng::random::<f64>(&mut rng))
            .collect();
        let (_, grads) = aux_loss_grads(&gates, kappa, &OMask::new());
        let pulled_up = grads.iter().filter(|g| **g < 0.0).count();
        prop_assert_eq!(pulled_up, aux_top_count(n, kappa));
    }

    #[test]
    fn reweighting_is_monotone(seed in any::<u64>(), n in 2usize..12, bump in 0.01f64..3.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let keys = ndarray::Array2::from_shape_fn((n, 3), |_| rand::Rng::random::<f64>(&mut rng) - 0.5);
        let q = ndarray::Array1::from_shape_fn(3, |_| rand::Rng::random::<f64>(&mut rng) - 0.5);
        let logits: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng) * 4.0 - 2.0).collect();
        let target = rand::Rng::random_range(&mut rng, 0..n);
        let before = reweighted_attention(q.view(), &keys, &logits, 0.5).unwrap();
        let mut bumped = logits.clone();
        bumped[target] += bump;
        let after = reweighted_attention(q.view(), &keys, &bumped, 0.5).unwrap();
        prop_assert!(after[target] > before[target]);
        for i in 0..n {
            if i != target {
                prop_assert!(after[i] <= before[i] + 1e-15);
            }
        }
        prop_assert!((after.sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn every_chunker_emits_valid_tagseqs() {
    let corpus: Vec<Sentence> = (0..10)
        .map(|i| {
            let words: Vec<String> = (0..(3 + i % 5)).map(|j| format!("w{}", (i * 7 + j * 3) % 9)).collect();
            Sentence::from_words(i.to_string(), &words)
        })
        .collect();
    let mut masks: Vec<OMask> = Vec::new();
    for (i, s) in corpus.iter().enumerate() {
        let mut m = OMask::new();
        if i % 2 == 0 && s.len() > 2 {
            m.insert(0);
            m.insert(s.len() - 1);
        }
        masks.push(m);
    }

    let mut pmi = pmi_fit(&corpus, false).unwrap();
    pmi.tau = 0.3;
    let hmm = hmm_fit(&corpus, 2, 7, 10, false).unwrap().model;
    let provider = Provider::Hashed { d: 8, seed: 5 };

    for (s, mask) in corpus.iter().zip(&masks) {
        for tags in [
            pmi_chunk(&pmi, s, mask),
            hmm_chunk(&hmm, s, mask),
            lm_chunk(&provider, s, 0.2, mask).unwrap(),
        ] {
            // Re-validating through the constructor proves the invariants.
            assert!(TagSeq::new(tags.tags().to_vec()).is_ok());
            for &i in mask {
                assert_eq!(tags.tags()[i], Tag::O);
            }
        }
    }
}

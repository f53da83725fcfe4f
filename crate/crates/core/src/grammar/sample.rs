//! Ancestral sampling from a PCFG, used to build synthetic corpora whose
//! true parse trees are known.

use super::{GrammarError, Pcfg};
use crate::tree::BinaryTree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct SampledSentence {
    pub words: Vec<String>,
    pub tree: BinaryTree,
}

fn pick<R: Rng>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // Row sums can fall a hair short of 1; attribute the remainder to the
    // final index.
    last
}

/// Samples one derivation; `None` when it grows past `max_len` leaves or
/// recurses unreasonably deep without emitting words.
pub fn sample_sentence<R: Rng>(g: &Pcfg, rng: &mut R, max_len: usize) -> Option<SampledSentence> {
    let start = pick((0..g.n_symbols()).map(|s| g.root_prob(s)), rng);
    let mut words = Vec::new();
    let max_depth = 4 * max_len + 32;
    let tree = expand(g, start, rng, &mut words, max_len, max_depth)?;
    Some(SampledSentence { words, tree })
}

fn expand<R: Rng>(
    g: &Pcfg,
    sym: usize,
    rng: &mut R,
    words: &mut Vec<String>,
    max_len: usize,
    depth_left: usize,
) -> Option<BinaryTree> {
    if depth_left == 0 {
        return None;
    }
    if g.is_preterminal(sym) {
        if words.len() >= max_len {
            return None;
        }
        let w = pick((0..g.n_terminals()).map(|t| g.lexical_prob(sym, t)), rng);
        words.push(g.terminals()[w].clone());
        return Some(BinaryTree::Leaf(words.len() - 1));
    }
    if words.len() >= max_len {
        return None;
    }
    let n_sym = g.n_symbols();
    let choice = pick(
        (0..n_sym * n_sym).map(|bc| g.binary_prob(sym, bc / n_sym, bc % n_sym)),
        rng,
    );
    let (b, c) = (choice / n_sym, choice % n_sym);
    let left = expand(g, b, rng, words, max_len, depth_left - 1)?;
    let right = expand(g, c, rng, words, max_len, depth_left - 1)?;
    Some(BinaryTree::node(left, right))
}

/// Samples `count` sentences with lengths in `[min_len, max_len]`,
/// deterministic per seed. Rejected draws (too long or too short) are
/// retried up to `10_000 * count` attempts.
pub fn sample_corpus(
    g: &Pcfg,
    seed: u64,
    count: usize,
    min_len: usize,
    max_len: usize,
) -> Result<Vec<SampledSentence>, GrammarError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let budget = 10_000usize.saturating_mul(count.max(1));
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > budget {
            return Err(GrammarError::SampleBudget { attempts, max_len });
        }
        if let Some(s) = sample_sentence(g, &mut rng, max_len) {
            if s.words.len() >= min_len {
                out.push(s);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{inside_logprob, random_pcfg};

    #[test]
    fn samples_are_valid_and_parseable() {
        let g = random_pcfg(9, 2, 3, 4);
        let corpus = sample_corpus(&g, 17, 25, 1, 12).unwrap();
        assert_eq!(corpus.len(), 25);
        for s in &corpus {
            assert_eq!(s.tree.validate().unwrap(), s.words.len());
            let refs: Vec<&str> = s.words.iter().map(String::as_str).collect();
            let lp = inside_logprob(&g, &refs).unwrap();
            assert!(lp > f64::NEG_INFINITY, "sampled sentence must parse under its own grammar");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let g = random_pcfg(9, 2, 3, 4);
        let a = sample_corpus(&g, 5, 10, 1, 10).unwrap();
        let b = sample_corpus(&g, 5, 10, 1, 10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.words, y.words);
            assert_eq!(x.tree, y.tree);
        }
    }
}

//! Chart algorithms over a PCFG: the inside pass (total parse probability)
//! and Viterbi CYK (best parse). All chart math is in log space.

use super::{GrammarError, Pcfg};
use crate::tree::BinaryTree;
use crate::util::{log_add, logsumexp};

/// Log-space view of a grammar, with binary rules flattened to a list of
/// finite-probability entries sorted by (lhs, left, right) id.
pub(super) struct LogTables {
    pub n_nt: usize,
    pub n_sym: usize,
    pub n_term: usize,
    pub root: Vec<f64>,
    /// Finite-probability binary rules, sorted by (lhs, left, right) id.
    pub rules: Vec<BinRule>,
    pub lex: Vec<f64>,
}

#[derive(Clone, Copy)]
pub(super) struct BinRule {
    pub a: u32,
    pub b: u32,
    pub c: u32,
    pub logp: f64,
}

impl LogTables {
    pub fn new(g: &Pcfg) -> Self {
        let n_nt = g.n_nonterminals();
        let n_sym = g.n_symbols();
        let n_term = g.n_terminals();
        let root = (0..n_sym).map(|s| g.root_prob(s).ln()).collect();
        let mut rules = Vec::new();
        for a in 0..n_nt {
            for b in 0..n_sym {
                for c in 0..n_sym {
                    let p = g.binary_prob(a, b, c);
                    if p > 0.0 {
                        rules.push(BinRule { a: a as u32, b: b as u32, c: c as u32, logp: p.ln() });
                    }
                }
            }
        }
        let mut lex = vec![f64::NEG_INFINITY; (n_sym - n_nt) * n_term];
        for t in 0..(n_sym - n_nt) {
            for w in 0..n_term {
                let p = g.lexical_prob(n_nt + t, w);
                if p > 0.0 {
                    lex[t * n_term + w] = p.ln();
                }
            }
        }
        LogTables { n_nt, n_sym, n_term, root, rules, lex }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, sym: usize, n: usize) -> usize {
        (i * n + j) * self.n_sym + sym
    }
}

pub(super) fn lookup_terms(g: &Pcfg, words: &[&str]) -> Result<Vec<usize>, GrammarError> {
    words
        .iter()
        .map(|w| g.terminal_id(w).ok_or_else(|| GrammarError::UnknownTerminal { word: (*w).to_string() }))
        .collect()
}

/// Inside chart: log total probability of each (span, symbol).
pub(super) fn inside_chart(t: &LogTables, terms: &[usize]) -> Vec<f64> {
    let n = terms.len();
    let mut chart = vec![f64::NEG_INFINITY; n * n * t.n_sym];
    for (i, &w) in terms.iter().enumerate() {
        for pt in 0..(t.n_sym - t.n_nt) {
            chart[t.idx(i, i, t.n_nt + pt, n)] = t.lex[pt * t.n_term + w];
        }
    }
    for width in 2..=n {
        for i in 0..=(n - width) {
            let j = i + width - 1;
            for rule in &t.rules {
                let mut acc = chart[t.idx(i, j, rule.a as usize, n)];
                for k in i..j {
                    let left = chart[t.idx(i, k, rule.b as usize, n)];
                    if left == f64::NEG_INFINITY {
                        continue;
                    }
                    let right = chart[t.idx(k + 1, j, rule.c as usize, n)];
                    if right == f64::NEG_INFINITY {
                        continue;
                    }
                    acc = log_add(acc, rule.logp + left + right);
                }
                chart[t.idx(i, j, rule.a as usize, n)] = acc;
            }
        }
    }
    chart
}

pub(super) fn sentence_logprob(t: &LogTables, chart: &[f64], n: usize) -> f64 {
    let scores: Vec<f64> =
        (0..t.n_sym).map(|s| t.root[s] + chart[t.idx(0, n - 1, s, n)]).collect();
    logsumexp(&scores)
}

/// Log of the total probability of all binary parses; `-inf` when the
/// sentence has no parse. Unknown words are an error.
pub fn inside_logprob(g: &Pcfg, words: &[&str]) -> Result<f64, GrammarError> {
    let terms = lookup_terms(g, words)?;
    let t = LogTables::new(g);
    let chart = inside_chart(&t, &terms);
    Ok(sentence_logprob(&t, &chart, terms.len()))
}

/// A highest-probability parse and its log probability.
///
/// Ties are broken deterministically: the smaller split point wins, then the
/// smaller (left, right) symbol-id pair; symbol ids follow sorted names.
pub fn viterbi_cyk(g: &Pcfg, words: &[&str]) -> Result<(BinaryTree, f64), GrammarError> {
    let terms = lookup_terms(g, words)?;
    let t = LogTables::new(g);
    let n = terms.len();
    let mut best = vec![f64::NEG_INFINITY; n * n * t.n_sym];
    let mut back: Vec<(u32, u32, u32)> = vec![(0, 0, 0); n * n * t.n_sym];

    for (i, &w) in terms.iter().enumerate() {
        for pt in 0..(t.n_sym - t.n_nt) {
            best[t.idx(i, i, t.n_nt + pt, n)] = t.lex[pt * t.n_term + w];
        }
    }
    for width in 2..=n {
        for i in 0..=(n - width) {
            let j = i + width - 1;
            // Split-point-major iteration so the strict `>` keeps the
            // earliest split, then the earliest rule, on exact ties.
            for k in i..j {
                for rule in &t.rules {
                    let left = best[t.idx(i, k, rule.b as usize, n)];
                    if left == f64::NEG_INFINITY {
                        continue;
                    }
                    let right = best[t.idx(k + 1, j, rule.c as usize, n)];
                    if right == f64::NEG_INFINITY {
                        continue;
                    }
                    let cand = rule.logp + left + right;
                    let cell = t.idx(i, j, rule.a as usize, n);
                    if cand > best[cell] {
                        best[cell] = cand;
                        back[cell] = (k as u32, rule.b, rule.c);
                    }
                }
            }
        }
    }

    let mut top_sym = usize::MAX;
    let mut top = f64::NEG_INFINITY;
    for s in 0..t.n_sym {
        let score = t.root[s] + best[t.idx(0, n - 1, s, n)];
        if score > top {
            top = score;
            top_sym = s;
        }
    }
    if top == f64::NEG_INFINITY {
        return Err(GrammarError::NoParse { sentence: words.join(" ") });
    }

    fn build(t: &LogTables, back: &[(u32, u32, u32)], i: usize, j: usize, sym: usize, n: usize) -> BinaryTree {
        if i == j {
            return BinaryTree::Leaf(i);
        }
        let (k, b, c) = back[t.idx(i, j, sym, n)];
        let k = k as usize;
        BinaryTree::node(
            build(t, back, i, k, b as usize, n),
            build(t, back, k + 1, j, c as usize, n),
        )
    }
    Ok((build(&t, &back, 0, n - 1, top_sym, n), top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Pcfg;
    use crate::tree::render_tree;

    fn chain_grammar() -> Pcfg {
        // Exactly one derivation of "a b c": (a (b c)) through A -> T B, B -> T U.
        Pcfg::from_rules(
            &[("A", 1.0)],
            &[("A", "T", "B", 1.0), ("B", "T", "U", 1.0)],
            &[("T", "a", 0.5), ("T", "b", 0.5), ("U", "c", 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_word_sentence_uses_direct_start_rule() {
        let g = Pcfg::from_rules(&[("T", 1.0)], &[], &[("T", "w", 0.25)]).unwrap();
        let lp = inside_logprob(&g, &["w"]).unwrap();
        assert!((lp - 0.25f64.ln()).abs() < 1e-12);
        let (tree, score) = viterbi_cyk(&g, &["w"]).unwrap();
        assert_eq!(tree, BinaryTree::Leaf(0));
        assert!((score - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unique_derivation_with_unit_probs_scores_zero() {
        let g = Pcfg::from_rules(
            &[("A", 1.0)],
            &[("A", "T", "U", 1.0)],
            &[("T", "a", 1.0), ("U", "b", 1.0)],
        )
        .unwrap();
        let lp = inside_logprob(&g, &["a", "b"]).unwrap();
        assert!(lp.abs() < 1e-12);
        let (tree, score) = viterbi_cyk(&g, &["a", "b"]).unwrap();
        assert!(score.abs() < 1e-12);
        assert_eq!(tree.validate().unwrap(), 2);
    }

    #[test]
    fn chain_grammar_builds_expected_tree() {
        let g = chain_grammar();
        let words = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let (tree, score) = viterbi_cyk(&g, &["a", "b", "c"]).unwrap();
        assert_eq!(render_tree(&tree, &words), "(a (b c))");
        assert!((score - (0.25f64).ln()).abs() < 1e-12);
        let inside = inside_logprob(&g, &["a", "b", "c"]).unwrap();
        assert!((inside - score).abs() < 1e-12, "single derivation: inside == viterbi");
    }

    #[test]
    fn unknown_terminal_is_reported() {
        let g = chain_grammar();
        let err = inside_logprob(&g, &["a", "zzz"]).unwrap_err();
        assert_eq!(err, GrammarError::UnknownTerminal { word: "zzz".to_string() });
    }

    #[test]
    fn unparseable_sentence() {
        let g = chain_grammar();
        // "c a" has no derivation under the chain grammar.
        assert_eq!(inside_logprob(&g, &["c", "a"]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(viterbi_cyk(&g, &["c", "a"]), Err(GrammarError::NoParse { .. })));
    }

    #[test]
    fn tie_break_prefers_smaller_split() {
        // "x x x" derivable as ((x x) x) via A -> B T (split 1) and
        // (x (x x)) via A -> T B (split 0) with identical probabilities;
        // the smaller split point wins.
        let g = Pcfg::from_rules(
            &[("A", 1.0)],
            &[("A", "B", "T", 0.5), ("A", "T", "B", 0.5), ("B", "T", "T", 1.0)],
            &[("T", "x", 1.0)],
        )
        .unwrap();
        let words = vec!["x".to_string(); 3];
        let (tree, _) = viterbi_cyk(&g, &["x", "x", "x"]).unwrap();
        assert_eq!(render_tree(&tree, &words), "(x (x x))");
    }

    #[test]
    fn inside_at_least_viterbi() {
        let g = crate::grammar::random_pcfg(11, 2, 2, 3);
        let words = ["w000", "w001", "w000", "w002"];
        let inside = inside_logprob(&g, &words).unwrap();
        let (_, vit) = viterbi_cyk(&g, &words).unwrap();
        assert!(inside >= vit - 1e-12);
    }
}

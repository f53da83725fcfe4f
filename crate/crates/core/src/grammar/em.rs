//! Inside-outside expectation-maximization over a corpus.
//!
//! Expected rule counts are computed per sentence (in parallel when enabled)
//! and reduced in sentence order, so repeated runs are bit-identical for any
//! worker count. Unparseable sentences (including those with out-of-vocabulary
//! words) are skipped and counted.

use super::parse::{inside_chart, sentence_logprob, LogTables};
use super::{GrammarError, Pcfg};
use crate::par;
use crate::util::log_add;

/// One EM update. `log_likelihood` is the corpus log-likelihood under the
/// grammar *before* the update.
#[derive(Debug, Clone)]
pub struct EmStep {
    pub grammar: Pcfg,
    pub log_likelihood: f64,
    pub skipped: usize,
}

struct Counts {
    root: Vec<f64>,
    binary: Vec<f64>,
    lexical: Vec<f64>,
}

impl Counts {
    fn zeros(g: &Pcfg) -> Self {
        Counts {
            root: vec![0.0; g.n_symbols()],
            binary: vec![0.0; g.binary.len()],
            lexical: vec![0.0; g.lexical.len()],
        }
    }

    fn add(&mut self, other: &Counts) {
        for (a, b) in self.root.iter_mut().zip(&other.root) {
            *a += b;
        }
        for (a, b) in self.binary.iter_mut().zip(&other.binary) {
            *a += b;
        }
        for (a, b) in self.lexical.iter_mut().zip(&other.lexical) {
            *a += b;
        }
    }
}

fn outside_chart(t: &LogTables, inside: &[f64], n: usize) -> Vec<f64> {
    let mut outside = vec![f64::NEG_INFINITY; n * n * t.n_sym];
    for s in 0..t.n_sym {
        outside[t.idx(0, n - 1, s, n)] = t.root[s];
    }
    // Parents strictly wider than their children: sweep widths downward.
    for width in (2..=n).rev() {
        for i in 0..=(n - width) {
            let j = i + width - 1;
            for rule in &t.rules {
                let pa = outside[t.idx(i, j, rule.a as usize, n)];
                if pa == f64::NEG_INFINITY {
                    continue;
                }
                for k in i..j {
                    let left_in = inside[t.idx(i, k, rule.b as usize, n)];
                    let right_in = inside[t.idx(k + 1, j, rule.c as usize, n)];
                    if right_in > f64::NEG_INFINITY {
                        let cell = t.idx(i, k, rule.b as usize, n);
                        outside[cell] = log_add(outside[cell], pa + rule.logp + right_in);
                    }
                    if left_in > f64::NEG_INFINITY {
                        let cell = t.idx(k + 1, j, rule.c as usize, n);
                        outside[cell] = log_add(outside[cell], pa + rule.logp + left_in);
                    }
                }
            }
        }
    }
    outside
}

fn sentence_counts(g: &Pcfg, t: &LogTables, terms: &[usize]) -> Option<(Counts, f64)> {
    let n = terms.len();
    let inside = inside_chart(t, terms);
    let log_z = sentence_logprob(t, &inside, n);
    if log_z == f64::NEG_INFINITY {
        return None;
    }
    let outside = outside_chart(t, &inside, n);
    let mut counts = Counts::zeros(g);

    for s in 0..t.n_sym {
        let b = inside[t.idx(0, n - 1, s, n)];
        if b > f64::NEG_INFINITY && t.root[s] > f64::NEG_INFINITY {
            counts.root[s] += (t.root[s] + b - log_z).exp();
        }
    }
    let n_sym = t.n_sym;
    for width in 2..=n {
        for i in 0..=(n - width) {
            let j = i + width - 1;
            for rule in &t.rules {
                let pa = outside[t.idx(i, j, rule.a as usize, n)];
                if pa == f64::NEG_INFINITY {
                    continue;
                }
                let mut expect = 0.0;
                for k in i..j {
                    let left = inside[t.idx(i, k, rule.b as usize, n)];
                    if left == f64::NEG_INFINITY {
                        continue;
                    }
                    let right = inside[t.idx(k + 1, j, rule.c as usize, n)];
                    if right == f64::NEG_INFINITY {
                        continue;
                    }
                    expect += (pa + rule.logp + left + right - log_z).exp();
                }
                let idx = (rule.a as usize * n_sym + rule.b as usize) * n_sym + rule.c as usize;
                counts.binary[idx] += expect;
            }
        }
    }
    for (i, &w) in terms.iter().enumerate() {
        for pt in 0..(t.n_sym - t.n_nt) {
            let emit = t.lex[pt * t.n_term + w];
            if emit == f64::NEG_INFINITY {
                continue;
            }
            let out = outside[t.idx(i, i, t.n_nt + pt, n)];
            if out == f64::NEG_INFINITY {
                continue;
            }
            counts.lexical[pt * t.n_term + w] += (out + emit - log_z).exp();
        }
    }
    Some((counts, log_z))
}

/// Renormalizes a row from counts; rows with no mass keep their old values.
fn normalize_row(probs: &mut [f64], counts: &[f64]) {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        for (p, &c) in probs.iter_mut().zip(counts) {
            *p = c / total;
        }
    }
}

/// One inside-outside update of all rule probabilities.
pub fn em_step(g: &Pcfg, corpus: &[Vec<String>]) -> Result<EmStep, GrammarError> {
    let tables = LogTables::new(g);
    let per_sentence = par::map_ordered(corpus, |words| {
        let terms: Option<Vec<usize>> = words.iter().map(|w| g.terminal_id(w)).collect();
        terms.and_then(|terms| {
            if terms.is_empty() {
                None
            } else {
                sentence_counts(g, &tables, &terms)
            }
        })
    });

    let mut counts = Counts::zeros(g);
    let mut log_likelihood = 0.0;
    let mut skipped = 0;
    for item in &per_sentence {
        match item {
            Some((c, lz)) => {
                counts.add(c);
                log_likelihood += lz;
            }
            None => skipped += 1,
        }
    }
    if skipped == corpus.len() {
        return Err(GrammarError::EmptyCorpus);
    }

    let mut next = g.clone();
    normalize_row(&mut next.root, &counts.root);
    let s = g.n_symbols();
    for a in 0..g.n_nonterminals() {
        normalize_row(&mut next.binary[a * s * s..(a + 1) * s * s], &counts.binary[a * s * s..(a + 1) * s * s]);
    }
    let w = g.n_terminals();
    for t in 0..g.n_preterminals() {
        normalize_row(&mut next.lexical[t * w..(t + 1) * w], &counts.lexical[t * w..(t + 1) * w]);
    }
    Ok(EmStep { grammar: next, log_likelihood, skipped })
}

/// Outcome of an EM fit: the final grammar, the pre-update log-likelihood
/// of every iteration, and how many sentences the last pass skipped.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub grammar: Pcfg,
    pub log_likelihood: Vec<f64>,
    pub skipped: usize,
}

/// Runs `iters` EM updates.
pub fn fit_em(g: &Pcfg, corpus: &[Vec<String>], iters: usize) -> Result<EmFit, GrammarError> {
    let mut current = g.clone();
    let mut likelihoods = Vec::with_capacity(iters);
    let mut skipped = 0;
    for _ in 0..iters {
        let step = em_step(&current, corpus)?;
        likelihoods.push(step.log_likelihood);
        skipped = step.skipped;
        current = step.grammar;
    }
    Ok(EmFit { grammar: current, log_likelihood: likelihoods, skipped })
}

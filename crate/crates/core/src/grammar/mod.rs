//! Probabilistic context-free grammars restricted to three rule forms:
//! start rules `S -> A`, binary rules `A -> B C` over nonterminals and
//! preterminals, and lexical rules `T -> w` from preterminals to words.
//!
//! Distributions are stored densely per left-hand side (absent rules have
//! probability zero), symbols are kept sorted by name so that symbol ids,
//! iteration order, and Viterbi tie-breaking are reproducible no matter how
//! a grammar was assembled.
//!
//! A sentence of a single word is only derivable through a start rule that
//! points directly at a preterminal, so start rules over preterminals are
//! permitted; binary expansion always yields two or more words.

mod em;
mod io;
mod parse;
mod sample;

pub use em::{em_step, fit_em, EmFit, EmStep};
pub use io::{read_grammar, write_grammar};
pub use parse::{inside_logprob, viterbi_cyk};
pub use sample::{sample_corpus, sample_sentence, SampledSentence};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

/// Row sums may deviate from 1 by at most this much.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("rules for {lhs} sum to {mass}, expected 1")]
    Mass { lhs: String, mass: f64 },
    #[error("rule {rule} has probability {p} outside [0, 1]")]
    Range { rule: String, p: f64 },
    #[error("symbol {name} is both a nonterminal and a preterminal")]
    Ambiguous { name: String },
    #[error("unknown symbol {name}")]
    UnknownSymbol { name: String },
    #[error("unknown terminal {word:?}")]
    UnknownTerminal { word: String },
    #[error("duplicate rule {rule}")]
    DuplicateRule { rule: String },
    #[error("no parse for sentence {sentence:?}")]
    NoParse { sentence: String },
    #[error("no parseable sentences in corpus")]
    EmptyCorpus,
    #[error("grammar has no rules")]
    Empty,
    #[error("line {line}: cannot parse grammar rule {got:?}")]
    ParseLine { line: usize, got: String },
    #[error("sampling exceeded {attempts} attempts without producing a sentence of length <= {max_len}")]
    SampleBudget { attempts: usize, max_len: usize },
}

/// Symbol ids cover nonterminals first, then preterminals, each block sorted
/// by name. Terminal ids index the sorted terminal list.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    nonterminals: Vec<String>,
    preterminals: Vec<String>,
    terminals: Vec<String>,
    /// `S -> sym`, indexed by symbol id; length `n_symbols`.
    root: Vec<f64>,
    /// `A -> B C`, flattened `(a * n_symbols + b) * n_symbols + c` with `a`
    /// a nonterminal id.
    binary: Vec<f64>,
    /// `T -> w`, flattened `t * n_terminals + w` with `t` a preterminal
    /// offset (symbol id minus `n_nonterminals`).
    lexical: Vec<f64>,
}

impl Pcfg {
    pub fn n_nonterminals(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn n_preterminals(&self) -> usize {
        self.preterminals.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.nonterminals.len() + self.preterminals.len()
    }

    pub fn n_terminals(&self) -> usize {
        self.terminals.len()
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn preterminals(&self) -> &[String] {
        &self.preterminals
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn symbol_name(&self, sym: usize) -> &str {
        if sym < self.nonterminals.len() {
            &self.nonterminals[sym]
        } else {
            &self.preterminals[sym - self.nonterminals.len()]
        }
    }

    pub fn is_preterminal(&self, sym: usize) -> bool {
        sym >= self.nonterminals.len()
    }

    pub fn symbol_id(&self, name: &str) -> Option<usize> {
        if let Ok(i) = self.nonterminals.binary_search_by(|s| s.as_str().cmp(name)) {
            return Some(i);
        }
        self.preterminals
            .binary_search_by(|s| s.as_str().cmp(name))
            .ok()
            .map(|i| i + self.nonterminals.len())
    }

    pub fn terminal_id(&self, word: &str) -> Option<usize> {
        self.terminals.binary_search_by(|s| s.as_str().cmp(word)).ok()
    }

    pub fn root_prob(&self, sym: usize) -> f64 {
        self.root[sym]
    }

    pub fn binary_prob(&self, a: usize, b: usize, c: usize) -> f64 {
        self.binary[self.bin_idx(a, b, c)]
    }

    pub fn lexical_prob(&self, sym: usize, term: usize) -> f64 {
        let t = sym - self.nonterminals.len();
        self.lexical[t * self.terminals.len() + term]
    }

    fn bin_idx(&self, a: usize, b: usize, c: usize) -> usize {
        let s = self.n_symbols();
        (a * s + b) * s + c
    }

    /// Assembles a grammar from explicit rule lists. Nonterminals are the
    /// left-hand sides of binary rules, preterminals those of lexical rules,
    /// terminals the lexical right-hand words. Right-hand symbols must be
    /// declared by some rule.
    pub fn from_rules(
        root_rules: &[(&str, f64)],
        binary_rules: &[(&str, &str, &str, f64)],
        lexical_rules: &[(&str, &str, f64)],
    ) -> Result<Pcfg, GrammarError> {
        if root_rules.is_empty() && binary_rules.is_empty() && lexical_rules.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut nonterminals: Vec<String> =
            binary_rules.iter().map(|(a, _, _, _)| a.to_string()).collect();
        nonterminals.sort();
        nonterminals.dedup();
        let mut preterminals: Vec<String> =
            lexical_rules.iter().map(|(t, _, _)| t.to_string()).collect();
        preterminals.sort();
        preterminals.dedup();
        for nt in &nonterminals {
            if preterminals.binary_search(nt).is_ok() {
                return Err(GrammarError::Ambiguous { name: nt.clone() });
            }
        }
        let mut terminals: Vec<String> =
            lexical_rules.iter().map(|(_, w, _)| w.to_string()).collect();
        terminals.sort();
        terminals.dedup();

        let mut g = Pcfg {
            root: vec![0.0; nonterminals.len() + preterminals.len()],
            binary: vec![
                0.0;
                nonterminals.len()
                    * (nonterminals.len() + preterminals.len())
                    * (nonterminals.len() + preterminals.len())
            ],
            lexical: vec![0.0; preterminals.len() * terminals.len()],
            nonterminals,
            preterminals,
            terminals,
        };

        for &(a, p) in root_rules {
            let sym = g.symbol_id(a).ok_or_else(|| GrammarError::UnknownSymbol { name: a.to_string() })?;
            if g.root[sym] != 0.0 {
                return Err(GrammarError::DuplicateRule { rule: format!("ROOT {a}") });
            }
            g.root[sym] = p;
        }
        for &(a, b, c, p) in binary_rules {
            let ai = g.symbol_id(a).ok_or_else(|| GrammarError::UnknownSymbol { name: a.to_string() })?;
            let bi = g.symbol_id(b).ok_or_else(|| GrammarError::UnknownSymbol { name: b.to_string() })?;
            let ci = g.symbol_id(c).ok_or_else(|| GrammarError::UnknownSymbol { name: c.to_string() })?;
            debug_assert!(!g.is_preterminal(ai), "binary LHS classified nonterminal by construction");
            let idx = g.bin_idx(ai, bi, ci);
            if g.binary[idx] != 0.0 {
                return Err(GrammarError::DuplicateRule { rule: format!("BIN {a} {b} {c}") });
            }
            g.binary[idx] = p;
        }
        for &(t, w, p) in lexical_rules {
            let ti = g.symbol_id(t).ok_or_else(|| GrammarError::UnknownSymbol { name: t.to_string() })?;
            let wi = g.terminal_id(w).expect("terminal collected from this rule list");
            let off = ti - g.nonterminals.len();
            let idx = off * g.terminals.len() + wi;
            if g.lexical[idx] != 0.0 {
                return Err(GrammarError::DuplicateRule { rule: format!("LEX {t} {w}") });
            }
            g.lexical[idx] = p;
        }
        Ok(g)
    }

    /// Checks every probability is in `[0, 1]` and every left-hand side's
    /// rules sum to 1 within [`MASS_TOLERANCE`].
    pub fn validate(&self) -> Result<(), GrammarError> {
        let check_row = |probs: &mut dyn Iterator<Item = f64>, lhs: &str, rule: &str| {
            let mut mass = 0.0;
            for p in probs {
                if !(0.0..=1.0 + MASS_TOLERANCE).contains(&p) {
                    return Err(GrammarError::Range { rule: rule.to_string(), p });
                }
                mass += p;
            }
            if (mass - 1.0).abs() > MASS_TOLERANCE {
                return Err(GrammarError::Mass { lhs: lhs.to_string(), mass });
            }
            Ok(())
        };
        check_row(&mut self.root.iter().copied(), "S", "ROOT")?;
        let s = self.n_symbols();
        for a in 0..self.nonterminals.len() {
            let row = &self.binary[a * s * s..(a + 1) * s * s];
            check_row(&mut row.iter().copied(), &self.nonterminals[a], &format!("BIN {}", self.nonterminals[a]))?;
        }
        let w = self.terminals.len();
        for t in 0..self.preterminals.len() {
            let row = &self.lexical[t * w..(t + 1) * w];
            check_row(&mut row.iter().copied(), &self.preterminals[t], &format!("LEX {}", self.preterminals[t]))?;
        }
        Ok(())
    }
}

/// Random grammar with flat-Dirichlet rows, deterministic per seed.
/// Symbol names: nonterminals `A000..`, preterminals `T000..`, terminals
/// `w000..`.
pub fn random_pcfg(seed: u64, n_nt: usize, n_pt: usize, n_term: usize) -> Pcfg {
    assert!(n_term >= 1, "need at least one terminal");
    let terminals: Vec<String> = (0..n_term).map(|i| format!("w{i:03}")).collect();
    random_pcfg_over(seed, n_nt, n_pt, terminals)
}

/// Like [`random_pcfg`] but over a caller-supplied terminal vocabulary
/// (deduplicated and sorted), for initializing EM on real text.
pub fn random_pcfg_over(seed: u64, n_nt: usize, n_pt: usize, mut terminals: Vec<String>) -> Pcfg {
    assert!(n_nt >= 1 && n_pt >= 1 && !terminals.is_empty(), "symbol set sizes must be >= 1");
    terminals.sort();
    terminals.dedup();
    let n_term = terminals.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nonterminals: Vec<String> = (0..n_nt).map(|i| format!("A{i:03}")).collect();
    let preterminals: Vec<String> = (0..n_pt).map(|i| format!("T{i:03}")).collect();
    let n_sym = n_nt + n_pt;

    let mut g = Pcfg {
        nonterminals,
        preterminals,
        terminals,
        root: dirichlet_row(n_sym, &mut rng),
        binary: Vec::with_capacity(n_nt * n_sym * n_sym),
        lexical: Vec::with_capacity(n_pt * n_term),
    };
    for _ in 0..n_nt {
        g.binary.extend(dirichlet_row(n_sym * n_sym, &mut rng));
    }
    for _ in 0..n_pt {
        g.lexical.extend(dirichlet_row(n_term, &mut rng));
    }
    g
}

fn dirichlet_row<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    // Flat Dirichlet = normalized unit exponentials.
    let mut row: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p /= total;
    }
    row
}

//! Pointwise-mutual-information chunker: cut between two consecutive words
//! when their PMI falls below a threshold.

use super::{masked_tagseq, BaselineError};
use crate::corpus::{OMask, Sentence, Tag, TagSeq};
use crate::util::fmt_sig17;
use std::collections::BTreeMap;

/// Unigram/bigram counts with add-one smoothing applied at query time:
/// `p(w) = (c(w)+1)/(T+V)` and `p(a,b) = (c(a,b)+1)/(B+V^2)` where `V` is
/// the number of observed types, `T` the token total, and `B` the bigram
/// total.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiModel {
    pub unigram: BTreeMap<String, u64>,
    pub bigram: BTreeMap<(String, String), u64>,
    pub total_tokens: u64,
    pub total_bigrams: u64,
    pub tau: f64,
    pub lowercase: bool,
}

impl PmiModel {
    fn fold(&self, w: &str) -> String {
        if self.lowercase {
            w.to_lowercase()
        } else {
            w.to_string()
        }
    }

    fn p_unigram(&self, w: &str) -> f64 {
        let v = self.unigram.len() as f64;
        let c = self.unigram.get(w).copied().unwrap_or(0) as f64;
        (c + 1.0) / (self.total_tokens as f64 + v)
    }

    fn p_bigram(&self, a: &str, b: &str) -> f64 {
        let v = self.unigram.len() as f64;
        let c = self.bigram.get(&(a.to_string(), b.to_string())).copied().unwrap_or(0) as f64;
        (c + 1.0) / (self.total_bigrams as f64 + v * v)
    }

    /// Smoothed `ln p(a,b) - ln p(a) - ln p(b)`.
    pub fn pmi(&self, a: &str, b: &str) -> f64 {
        let a = self.fold(a);
        let b = self.fold(b);
        self.p_bigram(&a, &b).ln() - self.p_unigram(&a).ln() - self.p_unigram(&b).ln()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("pmi-model v1\n");
        out.push_str(&format!("lowercase {}\n", self.lowercase as u8));
        out.push_str(&format!("tau {}\n", fmt_sig17(self.tau)));
        out.push_str(&format!("total_tokens {}\n", self.total_tokens));
        out.push_str(&format!("total_bigrams {}\n", self.total_bigrams));
        for (w, c) in &self.unigram {
            out.push_str(&format!("unigram {w} {c}\n"));
        }
        for ((a, b), c) in &self.bigram {
            out.push_str(&format!("bigram {a} {b} {c}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PmiModel, BaselineError> {
        let mut model = PmiModel {
            unigram: BTreeMap::new(),
            bigram: BTreeMap::new(),
            total_tokens: 0,
            total_bigrams: 0,
            tau: 0.0,
            lowercase: false,
        };
        let mut saw_header = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| BaselineError::ModelParse { line: lineno + 1, reason: reason.to_string() };
            if !saw_header {
                if line != "pmi-model v1" {
                    return Err(err("expected `pmi-model v1` header"));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["lowercase", v] => model.lowercase = *v == "1",
                ["tau", v] => model.tau = v.parse().map_err(|_| err("bad tau"))?,
                ["total_tokens", v] => model.total_tokens = v.parse().map_err(|_| err("bad total"))?,
                ["total_bigrams", v] => model.total_bigrams = v.parse().map_err(|_| err("bad total"))?,
                ["unigram", w, c] => {
                    model.unigram.insert((*w).to_string(), c.parse().map_err(|_| err("bad count"))?);
                }
                ["bigram", a, b, c] => {
                    model
                        .bigram
                        .insert(((*a).to_string(), (*b).to_string()), c.parse().map_err(|_| err("bad count"))?);
                }
                _ => return Err(err("unrecognized record")),
            }
        }
        if !saw_header {
            return Err(BaselineError::ModelParse { line: 1, reason: "empty model file".to_string() });
        }
        Ok(model)
    }
}

/// Counts unigrams and adjacent bigrams over the corpus.
pub fn pmi_fit(corpus: &[Sentence], lowercase: bool) -> Result<PmiModel, BaselineError> {
    if corpus.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut model = PmiModel {
        unigram: BTreeMap::new(),
        bigram: BTreeMap::new(),
        total_tokens: 0,
        total_bigrams: 0,
        tau: 0.0,
        lowercase,
    };
    for s in corpus {
        let forms: Vec<String> = s.tokens.iter().map(|t| model.fold(&t.form)).collect();
        for w in &forms {
            *model.unigram.entry(w.clone()).or_insert(0) += 1;
            model.total_tokens += 1;
        }
        for pair in forms.windows(2) {
            *model.bigram.entry((pair[0].clone(), pair[1].clone())).or_insert(0) += 1;
            model.total_bigrams += 1;
        }
    }
    Ok(model)
}

/// Tags a sentence: the first position opens a chunk, and position `i`
/// opens a new one exactly when `PMI(w[i-1], w[i]) < tau`.
pub fn pmi_chunk(model: &PmiModel, sentence: &Sentence, o_mask: &OMask) -> TagSeq {
    let forms = sentence.forms();
    let mut tags = Vec::with_capacity(forms.len());
    for i in 0..forms.len() {
        let boundary = i == 0 || model.pmi(forms[i - 1], forms[i]) < model.tau;
        tags.push(if boundary { Tag::B } else { Tag::I });
    }
    masked_tagseq(tags, o_mask)
}

//! Hidden Markov model chunker fitted with Baum-Welch (forward-backward EM)
//! in log space, decoded with Viterbi, and mapped to B/I tags through a
//! per-state tag map chosen on labeled validation data.

use super::{masked_tagseq, BaselineError};
use crate::corpus::{OMask, Sentence, Tag, TagSeq};
use crate::eval::evaluate;
use crate::par;
use crate::util::{fmt_sig17, logsumexp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;

/// Probability floor for tokens outside a state's emission support.
const EMIT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub k: usize,
    vocab: BTreeMap<String, usize>,
    /// Linear probabilities; rows sum to 1.
    pub initial: Vec<f64>,
    pub transition: Vec<f64>,
    pub emission: Vec<f64>,
    pub state_tags: Vec<Tag>,
    pub lowercase: bool,
}

#[derive(Debug, Clone)]
pub struct HmmFit {
    pub model: HmmModel,
    /// Corpus log-likelihood before each update, one entry per iteration.
    pub log_likelihood: Vec<f64>,
}

impl HmmModel {
    fn fold(&self, w: &str) -> String {
        if self.lowercase {
            w.to_lowercase()
        } else {
            w.to_string()
        }
    }

    fn n_words(&self) -> usize {
        self.vocab.len()
    }

    fn obs_ids(&self, sentence: &Sentence) -> Vec<Option<usize>> {
        sentence.tokens.iter().map(|t| self.vocab.get(&self.fold(&t.form)).copied()).collect()
    }

    fn log_emit(&self, state: usize, obs: Option<usize>) -> f64 {
        let p = match obs {
            Some(w) => self.emission[state * self.n_words() + w].max(EMIT_FLOOR),
            None => EMIT_FLOOR,
        };
        p.ln()
    }

    /// Most likely state sequence; ties resolve to the smaller state id.
    pub fn viterbi(&self, sentence: &Sentence) -> Vec<usize> {
        let obs = self.obs_ids(sentence);
        let n = obs.len();
        if n == 0 {
            return Vec::new();
        }
        let k = self.k;
        let l_init: Vec<f64> = self.initial.iter().map(|p| p.ln()).collect();
        let l_trans: Vec<f64> = self.transition.iter().map(|p| p.ln()).collect();
        let mut score = vec![f64::NEG_INFINITY; n * k];
        let mut back = vec![0usize; n * k];
        for i in 0..k {
            score[i] = l_init[i] + self.log_emit(i, obs[0]);
        }
        for t in 1..n {
            for j in 0..k {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for i in 0..k {
                    let cand = score[(t - 1) * k + i] + l_trans[i * k + j];
                    if cand > best {
                        best = cand;
                        arg = i;
                    }
                }
                score[t * k + j] = best + self.log_emit(j, obs[t]);
                back[t * k + j] = arg;
            }
        }
        let mut last = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..k {
            if score[(n - 1) * k + i] > best {
                best = score[(n - 1) * k + i];
                last = i;
            }
        }
        let mut states = vec![0usize; n];
        states[n - 1] = last;
        for t in (1..n).rev() {
            states[t - 1] = back[t * k + states[t]];
        }
        states
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("hmm-model v1\n");
        out.push_str(&format!("k {}\n", self.k));
        out.push_str(&format!("lowercase {}\n", self.lowercase as u8));
        let tags: Vec<&str> = self.state_tags.iter().map(|t| t.as_str()).collect();
        out.push_str(&format!("state_tags {}\n", tags.join(" ")));
        let fmt_row = |row: &[f64]| row.iter().map(|p| fmt_sig17(*p)).collect::<Vec<_>>().join(" ");
        out.push_str(&format!("initial {}\n", fmt_row(&self.initial)));
        for i in 0..self.k {
            out.push_str(&format!("transition {}\n", fmt_row(&self.transition[i * self.k..(i + 1) * self.k])));
        }
        for i in 0..self.k {
            for (w, &wi) in &self.vocab {
                let p = self.emission[i * self.n_words() + wi];
                if p > 0.0 {
                    out.push_str(&format!("emit {i} {w} {}\n", fmt_sig17(p)));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<HmmModel, BaselineError> {
        let mut k = 0usize;
        let mut lowercase = false;
        let mut state_tags = Vec::new();
        let mut initial = Vec::new();
        let mut transition_rows: Vec<Vec<f64>> = Vec::new();
        let mut emits: Vec<(usize, String, f64)> = Vec::new();
        let mut saw_header = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| BaselineError::ModelParse { line: lineno + 1, reason: reason.to_string() };
            if !saw_header {
                if line != "hmm-model v1" {
                    return Err(err("expected `hmm-model v1` header"));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["k", v] => k = v.parse().map_err(|_| err("bad k"))?,
                ["lowercase", v] => lowercase = *v == "1",
                ["state_tags", rest @ ..] => {
                    state_tags = rest
                        .iter()
                        .map(|t| match *t {
                            "B" => Ok(Tag::B),
                            "I" => Ok(Tag::I),
                            _ => Err(err("state tags must be B or I")),
                        })
                        .collect::<Result<_, _>>()?;
                }
                ["initial", rest @ ..] => {
                    initial = rest.iter().map(|v| v.parse().map_err(|_| err("bad prob"))).collect::<Result<_, _>>()?;
                }
                ["transition", rest @ ..] => {
                    transition_rows.push(
                        rest.iter().map(|v| v.parse().map_err(|_| err("bad prob"))).collect::<Result<_, _>>()?,
                    );
                }
                ["emit", s, w, p] => {
                    emits.push((s.parse().map_err(|_| err("bad state"))?, (*w).to_string(), p.parse().map_err(|_| err("bad prob"))?));
                }
                _ => return Err(err("unrecognized record")),
            }
        }
        if !saw_header {
            return Err(BaselineError::ModelParse { line: 1, reason: "empty model file".to_string() });
        }
        let mut vocab = BTreeMap::new();
        for (_, w, _) in &emits {
            let next = vocab.len();
            vocab.entry(w.clone()).or_insert(next);
        }
        // BTreeMap insertion order is not index order; rebuild indices sorted.
        let mut vocab_sorted = BTreeMap::new();
        for (i, w) in vocab.keys().cloned().enumerate() {
            vocab_sorted.insert(w, i);
        }
        let n_words = vocab_sorted.len();
        let mut emission = vec![0.0; k * n_words];
        for (s, w, p) in emits {
            emission[s * n_words + vocab_sorted[&w]] = p;
        }
        Ok(HmmModel {
            k,
            vocab: vocab_sorted,
            initial,
            transition: transition_rows.into_iter().flatten().collect(),
            emission,
            state_tags,
            lowercase,
        })
    }
}

struct SentStats {
    init: Vec<f64>,
    trans: Vec<f64>,
    emit: Vec<f64>,
    log_z: f64,
}

fn forward_backward(model: &HmmModel, obs: &[Option<usize>]) -> SentStats {
    let k = model.k;
    let v = model.n_words();
    let n = obs.len();
    let l_init: Vec<f64> = model.initial.iter().map(|p| p.ln()).collect();
    let l_trans: Vec<f64> = model.transition.iter().map(|p| p.ln()).collect();

    let mut alpha = vec![f64::NEG_INFINITY; n * k];
    for i in 0..k {
        alpha[i] = l_init[i] + model.log_emit(i, obs[0]);
    }
    let mut scratch = vec![0.0; k];
    for t in 1..n {
        for j in 0..k {
            for (i, s) in scratch.iter_mut().enumerate() {
                *s = alpha[(t - 1) * k + i] + l_trans[i * k + j];
            }
            alpha[t * k + j] = logsumexp(&scratch) + model.log_emit(j, obs[t]);
        }
    }
    let log_z = logsumexp(&alpha[(n - 1) * k..n * k]);

    let mut beta = vec![f64::NEG_INFINITY; n * k];
    for i in 0..k {
        beta[(n - 1) * k + i] = 0.0;
    }
    for t in (0..n - 1).rev() {
        for i in 0..k {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = l_trans[i * k + j] + model.log_emit(j, obs[t + 1]) + beta[(t + 1) * k + j];
            }
            beta[t * k + i] = logsumexp(&scratch);
        }
    }

    let mut stats = SentStats {
        init: vec![0.0; k],
        trans: vec![0.0; k * k],
        emit: vec![0.0; k * v],
        log_z,
    };
    if log_z == f64::NEG_INFINITY {
        return stats;
    }
    for t in 0..n {
        for i in 0..k {
            let gamma = (alpha[t * k + i] + beta[t * k + i] - log_z).exp();
            if t == 0 {
                stats.init[i] += gamma;
            }
            if let Some(w) = obs[t] {
                stats.emit[i * v + w] += gamma;
            }
        }
    }
    for t in 0..n - 1 {
        for i in 0..k {
            let a_ti = alpha[t * k + i];
            if a_ti == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..k {
                let xi = (a_ti + l_trans[i * k + j] + model.log_emit(j, obs[t + 1]) + beta[(t + 1) * k + j]
                    - log_z)
                    .exp();
                stats.trans[i * k + j] += xi;
            }
        }
    }
    stats
}

fn normalize_row(row: &mut [f64]) {
    // Tiny floor so a row never collapses to exact zeros, which would make
    // previously seen sentences impossible in the next expectation pass.
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for p in row.iter_mut() {
            *p = (*p / total).max(1e-300);
        }
        let total: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
    }
}

/// Baum-Welch from a random (seed-determined) initialization.
pub fn hmm_fit(
    corpus: &[Sentence],
    k: usize,
    seed: u64,
    iters: usize,
    lowercase: bool,
) -> Result<HmmFit, BaselineError> {
    if k < 2 {
        return Err(BaselineError::BadStateCount { k });
    }
    if corpus.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut vocab = BTreeMap::new();
    let fold = |w: &str| if lowercase { w.to_lowercase() } else { w.to_string() };
    for s in corpus {
        for t in &s.tokens {
            let next = vocab.len();
            vocab.entry(fold(&t.form)).or_insert(next);
        }
    }
    let mut vocab_sorted = BTreeMap::new();
    for (i, w) in vocab.keys().cloned().enumerate() {
        vocab_sorted.insert(w, i);
    }
    let v = vocab_sorted.len();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rand_row = |len: usize| -> Vec<f64> {
        let mut row: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = row.iter().sum();
        for p in &mut row {
            *p /= total;
        }
        row
    };
    let mut state_tags = vec![Tag::I; k];
    state_tags[0] = Tag::B; // placeholder until validation-based selection
    let mut model = HmmModel {
        k,
        vocab: vocab_sorted,
        initial: rand_row(k),
        transition: (0..k).flat_map(|_| rand_row(k)).collect(),
        emission: (0..k).flat_map(|_| rand_row(v)).collect(),
        state_tags,
        lowercase,
    };

    let mut log_likelihood = Vec::with_capacity(iters);
    let observations: Vec<Vec<Option<usize>>> = corpus.iter().map(|s| model.obs_ids(s)).collect();
    for _ in 0..iters {
        let per_sentence = par::map_ordered(&observations, |obs| {
            if obs.is_empty() {
                None
            } else {
                Some(forward_backward(&model, obs))
            }
        });
        let mut init = vec![0.0; k];
        let mut trans = vec![0.0; k * k];
        let mut emit = vec![0.0; k * v];
        let mut ll = 0.0;
        for stats in per_sentence.into_iter().flatten() {
            for (a, b) in init.iter_mut().zip(&stats.init) {
                *a += b;
            }
            for (a, b) in trans.iter_mut().zip(&stats.trans) {
                *a += b;
            }
            for (a, b) in emit.iter_mut().zip(&stats.emit) {
                *a += b;
            }
            ll += stats.log_z;
        }
        log_likelihood.push(ll);

        normalize_row(&mut init);
        model.initial = init;
        for i in 0..k {
            normalize_row(&mut trans[i * k..(i + 1) * k]);
            normalize_row(&mut emit[i * v..(i + 1) * v]);
        }
        model.transition = trans;
        model.emission = emit;
    }
    Ok(HmmFit { model, log_likelihood })
}

/// Viterbi states mapped through the state tag map, masked and normalized.
pub fn hmm_chunk(model: &HmmModel, sentence: &Sentence, o_mask: &OMask) -> TagSeq {
    let states = model.viterbi(sentence);
    let tags: Vec<Tag> = states.iter().map(|&s| model.state_tags[s]).collect();
    masked_tagseq(tags, o_mask)
}

/// Enumerates all state-to-tag maps and returns the one maximizing phrase F1
/// on the validation set (first maximum wins). Gold `O` positions are used
/// as the exclusion mask.
pub fn select_state_tags(
    model: &HmmModel,
    validation: &[(Sentence, TagSeq)],
) -> Result<(Vec<Tag>, f64), BaselineError> {
    if model.k > 16 {
        return Err(BaselineError::TooManyStates { k: model.k });
    }
    let state_seqs: Vec<Vec<usize>> =
        par::map_ordered(validation, |(s, _)| model.viterbi(s));
    let gold: Vec<TagSeq> = validation.iter().map(|(_, t)| t.clone()).collect();
    let mut best: Option<(Vec<Tag>, f64)> = None;
    for mask in 0u32..(1 << model.k) {
        let tag_of: Vec<Tag> =
            (0..model.k).map(|i| if mask >> i & 1 == 1 { Tag::B } else { Tag::I }).collect();
        let pred: Vec<TagSeq> = state_seqs
            .iter()
            .zip(validation)
            .map(|(states, (_, gold))| {
                let tags: Vec<Tag> = states.iter().map(|&s| tag_of[s]).collect();
                masked_tagseq(tags, &gold.o_mask())
            })
            .collect();
        let report = evaluate(&gold, &pred)?;
        if best.as_ref().is_none_or(|(_, f1)| report.f1 > *f1) {
            best = Some((tag_of, report.f1));
        }
    }
    Ok(best.expect("at least one map enumerated"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| Sentence::from_words(i.to_string(), &l.split_whitespace().collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn one_state_is_rejected() {
        let err = hmm_fit(&corpus(&["a b"]), 1, 0, 3, false).unwrap_err();
        assert!(matches!(err, BaselineError::BadStateCount { k: 1 }));
    }

    #[test]
    fn likelihood_is_non_decreasing() {
        let train = corpus(&["a b a b", "b a b", "a a b b a", "b b a"]);
        let fit = hmm_fit(&train, 2, 3, 25, false).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "dropped from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn same_seed_same_model() {
        let train = corpus(&["a b c", "c b a"]);
        let a = hmm_fit(&train, 3, 11, 10, false).unwrap();
        let b = hmm_fit(&train, 3, 11, 10, false).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihood, b.log_likelihood);
        let c = hmm_fit(&train, 3, 12, 10, false).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn alternating_hmm_decodes_alternating_tags() {
        let vocab: BTreeMap<String, usize> = [("x".to_string(), 0)].into_iter().collect();
        let model = HmmModel {
            k: 2,
            vocab,
            initial: vec![1.0, 0.0],
            transition: vec![0.0, 1.0, 1.0, 0.0],
            emission: vec![1.0, 1.0],
            state_tags: vec![Tag::B, Tag::I],
            lowercase: false,
        };
        let s = Sentence::from_words("0", &["x", "x", "x", "x"]);
        assert_eq!(model.viterbi(&s), vec![0, 1, 0, 1]);
        let tags = hmm_chunk(&model, &s, &OMask::new());
        assert_eq!(tags.tags(), &[Tag::B, Tag::I, Tag::B, Tag::I]);
    }

    #[test]
    fn all_b_map_gives_all_b() {
        let train = corpus(&["a b a b"]);
        let mut fit = hmm_fit(&train, 2, 5, 5, false).unwrap();
        fit.model.state_tags = vec![Tag::B, Tag::B];
        let s = Sentence::from_words("0", &["a", "b", "a"]);
        let tags = hmm_chunk(&fit.model, &s, &OMask::new());
        assert_eq!(tags.tags(), &[Tag::B, Tag::B, Tag::B]);
    }

    #[test]
    fn one_token_sentence_is_b() {
        let train = corpus(&["a b a b"]);
        let mut fit = hmm_fit(&train, 2, 5, 5, false).unwrap();
        fit.model.state_tags = vec![Tag::I, Tag::I];
        let s = Sentence::from_words("0", &["a"]);
        let tags = hmm_chunk(&fit.model, &s, &OMask::new());
        assert_eq!(tags.tags(), &[Tag::B], "normalization forces the initial B");
    }

    #[test]
    fn oov_tokens_hit_the_floor_not_a_panic() {
        let train = corpus(&["a b a"]);
        let fit = hmm_fit(&train, 2, 5, 5, false).unwrap();
        let s = Sentence::from_words("0", &["zzz", "a"]);
        let tags = hmm_chunk(&fit.model, &s, &OMask::new());
        assert_eq!(tags.len(), 2);
    }

    #[test]
    fn model_text_round_trip() {
        let train = corpus(&["a b c a", "b c"]);
        let fit = hmm_fit(&train, 2, 9, 8, true).unwrap();
        let text = fit.model.to_text();
        let back = HmmModel::from_text(&text).unwrap();
        assert_eq!(fit.model, back);
    }

    #[test]
    fn state_tag_selection_beats_placeholder_or_ties() {
        let train = corpus(&["a b a b a b", "b a b a"]);
        let fit = hmm_fit(&train, 2, 7, 20, false).unwrap();
        let val: Vec<(Sentence, TagSeq)> = train
            .iter()
            .map(|s| {
                let mut tags = vec![Tag::B];
                for _ in 1..s.len() {
                    tags.push(Tag::I);
                }
                (s.clone(), TagSeq::new(tags).unwrap())
            })
            .collect();
        let (tags, f1) = select_state_tags(&fit.model, &val).unwrap();
        assert_eq!(tags.len(), 2);
        // The all-I map normalizes to one chunk per sentence, which is gold.
        assert_eq!(f1, 100.0);
    }
}

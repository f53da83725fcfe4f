//! Per-token vector providers.
//!
//! Three interchangeable sources stand in for a contextual encoder:
//!
//! * `hashed` — each row is derived from a stable hash of the token form and
//!   a seed, i.i.d. uniform in [-0.1, 0.1]. Zero state, identical on every
//!   machine, but position-independent (the same word always gets the same
//!   row), so strictly weaker than a contextual encoder.
//! * `lookup` — one trainable row per token type, shared across positions;
//!   gradients flow back into the table during training.
//! * `file` — vectors dumped by some external encoder, keyed by sentence id,
//!   so genuinely contextual embeddings can be replayed.

use crate::corpus::Sentence;
use crate::util::fnv1a64;
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// One row per token.
pub type EmbeddingMatrix = Array2<f64>;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot parse provider spec {got:?}: {reason}")]
    BadSpec { got: String, reason: String },
    #[error("embedding file line {line}: {reason}")]
    BadFile { line: usize, reason: String },
    #[error("no stored vectors for sentence id {id:?}")]
    MissingSentence { id: String },
    #[error("sentence {id:?}: stored {got} rows, sentence has {want} tokens")]
    RowCount { id: String, got: usize, want: usize },
    #[error("dimension mismatch: provider is {want}-dimensional, file row has {got}")]
    Dimension { want: usize, got: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Hashed,
    Lookup,
    File,
}

/// Parsed `kind=...,d=...,seed=...,path=...` provider description.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub d: usize,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl ProviderSpec {
    pub fn hashed(d: usize, seed: u64) -> Self {
        ProviderSpec { kind: ProviderKind::Hashed, d, seed, path: None }
    }

    /// Parses the CLI syntax, e.g. `kind=hashed,d=16,seed=7`.
    pub fn parse(text: &str) -> Result<Self, EmbeddingError> {
        let bad = |reason: &str| EmbeddingError::BadSpec { got: text.to_string(), reason: reason.to_string() };
        let mut kind = None;
        let mut d = None;
        let mut seed = 0u64;
        let mut path = None;
        for field in text.split(',') {
            let (key, value) = field.split_once('=').ok_or_else(|| bad("expected key=value fields"))?;
            match key.trim() {
                "kind" => {
                    kind = Some(match value.trim() {
                        "hashed" => ProviderKind::Hashed,
                        "lookup" => ProviderKind::Lookup,
                        "file" => ProviderKind::File,
                        other => return Err(bad(&format!("unknown kind {other:?}"))),
                    })
                }
                "d" => d = Some(value.trim().parse().map_err(|_| bad("d must be a positive integer"))?),
                "seed" => seed = value.trim().parse().map_err(|_| bad("seed must be an integer"))?,
                "path" => path = Some(PathBuf::from(value.trim())),
                other => return Err(bad(&format!("unknown key {other:?}"))),
            }
        }
        let kind = kind.ok_or_else(|| bad("missing kind"))?;
        let d = d.ok_or_else(|| bad("missing d"))?;
        if d == 0 {
            return Err(bad("d must be >= 1"));
        }
        if kind == ProviderKind::File && path.is_none() {
            return Err(bad("file provider needs path"));
        }
        Ok(ProviderSpec { kind, d, seed, path })
    }

    pub fn to_spec_string(&self) -> String {
        let mut s = format!(
            "kind={},d={},seed={}",
            match self.kind {
                ProviderKind::Hashed => "hashed",
                ProviderKind::Lookup => "lookup",
                ProviderKind::File => "file",
            },
            self.d,
            self.seed
        );
        if let Some(p) = &self.path {
            s.push_str(&format!(",path={}", p.display()));
        }
        s
    }
}

/// Trainable per-type embedding table. Row 0 is reserved for unknown tokens.
#[derive(Debug, Clone)]
pub struct LookupTable {
    pub d: usize,
    vocab: BTreeMap<String, usize>,
    pub table: Array2<f64>,
}

pub const UNK_ROW: usize = 0;

impl LookupTable {
    /// Builds the vocabulary from a corpus; rows start i.i.d. uniform in
    /// [-0.1, 0.1], deterministic per seed.
    pub fn build(corpus: &[Sentence], d: usize, seed: u64) -> Self {
        let mut vocab = BTreeMap::new();
        for s in corpus {
            for t in &s.tokens {
                let next = vocab.len() + 1;
                vocab.entry(t.form.clone()).or_insert(next);
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows = vocab.len() + 1;
        let table = Array2::from_shape_fn((rows, d), |_| rng.random::<f64>() * 0.2 - 0.1);
        LookupTable { d, vocab, table }
    }

    pub fn row_of(&self, form: &str) -> usize {
        self.vocab.get(form).copied().unwrap_or(UNK_ROW)
    }

    pub fn n_rows(&self) -> usize {
        self.table.nrows()
    }

    pub fn vocab(&self) -> &BTreeMap<String, usize> {
        &self.vocab
    }

    pub fn from_parts(vocab: BTreeMap<String, usize>, table: Array2<f64>) -> Self {
        LookupTable { d: table.ncols(), vocab, table }
    }
}

/// A constructed provider, ready to embed sentences.
#[derive(Debug, Clone)]
pub enum Provider {
    Hashed { d: usize, seed: u64 },
    Lookup(LookupTable),
    File { d: usize, by_id: BTreeMap<String, Array2<f64>> },
}

impl Provider {
    /// Builds a provider from a spec. `corpus` is only consulted by the
    /// lookup provider (to fix its vocabulary).
    pub fn build(spec: &ProviderSpec, corpus: &[Sentence]) -> Result<Provider, EmbeddingError> {
        match spec.kind {
            ProviderKind::Hashed => Ok(Provider::Hashed { d: spec.d, seed: spec.seed }),
            ProviderKind::Lookup => Ok(Provider::Lookup(LookupTable::build(corpus, spec.d, spec.seed))),
            ProviderKind::File => {
                let path = spec.path.as_ref().expect("validated by ProviderSpec::parse");
                Provider::from_file(path, spec.d)
            }
        }
    }

    pub fn from_file(path: &Path, d: usize) -> Result<Provider, EmbeddingError> {
        let text = std::fs::read_to_string(path)?;
        Provider::from_embedding_text(&text, d)
    }

    /// Parses the embedding text format: a `#id <sentence-id>` header line,
    /// then one line of `d` decimals per token.
    pub fn from_embedding_text(text: &str, d: usize) -> Result<Provider, EmbeddingError> {
        let mut by_id: BTreeMap<String, Array2<f64>> = BTreeMap::new();
        let mut current: Option<(String, Vec<f64>)> = None;
        let flush = |cur: &mut Option<(String, Vec<f64>)>, by_id: &mut BTreeMap<String, Array2<f64>>| {
            if let Some((id, values)) = cur.take() {
                let rows = values.len() / d;
                let mat = Array2::from_shape_vec((rows, d), values).expect("row-aligned by construction");
                by_id.insert(id, mat);
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(id) = line.strip_prefix("#id ") {
                flush(&mut current, &mut by_id);
                current = Some((id.trim().to_string(), Vec::new()));
                continue;
            }
            let (_, values) = current
                .as_mut()
                .ok_or_else(|| EmbeddingError::BadFile { line: lineno + 1, reason: "vector row before any #id header".to_string() })?;
            let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|e| EmbeddingError::BadFile { line: lineno + 1, reason: e.to_string() })?;
            if row.len() != d {
                return Err(EmbeddingError::Dimension { want: d, got: row.len() });
            }
            values.extend(row);
        }
        flush(&mut current, &mut by_id);
        Ok(Provider::File { d, by_id })
    }

    pub fn dim(&self) -> usize {
        match self {
            Provider::Hashed { d, .. } | Provider::File { d, .. } => *d,
            Provider::Lookup(t) => t.d,
        }
    }

    /// Embeds a sentence; deterministic function of (provider, sentence).
    pub fn embed(&self, sentence: &Sentence) -> Result<EmbeddingMatrix, EmbeddingError> {
        match self {
            Provider::Hashed { d, seed } => {
                let mut m = Array2::zeros((sentence.len(), *d));
                for (i, tok) in sentence.tokens.iter().enumerate() {
                    let row = hashed_row(&tok.form, *seed, *d);
                    m.row_mut(i).assign(&row);
                }
                Ok(m)
            }
            Provider::Lookup(table) => {
                let mut m = Array2::zeros((sentence.len(), table.d));
                for (i, tok) in sentence.tokens.iter().enumerate() {
                    m.row_mut(i).assign(&table.table.row(table.row_of(&tok.form)));
                }
                Ok(m)
            }
            Provider::File { d, by_id } => {
                let mat = by_id
                    .get(&sentence.id)
                    .ok_or_else(|| EmbeddingError::MissingSentence { id: sentence.id.clone() })?;
                if mat.nrows() != sentence.len() {
                    return Err(EmbeddingError::RowCount {
                        id: sentence.id.clone(),
                        got: mat.nrows(),
                        want: sentence.len(),
                    });
                }
                debug_assert_eq!(mat.ncols(), *d);
                Ok(mat.clone())
            }
        }
    }

    /// Lookup-table row indices used by a sentence, for scattering gradients.
    pub fn lookup_rows(&self, sentence: &Sentence) -> Option<Vec<usize>> {
        match self {
            Provider::Lookup(t) => Some(sentence.tokens.iter().map(|tok| t.row_of(&tok.form)).collect()),
            _ => None,
        }
    }
}

fn hashed_row(form: &str, seed: u64, d: usize) -> Array1<f64> {
    // Position-independent by design: the hash sees only the token form and
    // the provider seed.
    let h = fnv1a64(form.as_bytes()) ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    let mut rng = ChaCha20Rng::seed_from_u64(h);
    Array1::from_shape_fn(d, |_| rng.random::<f64>() * 0.2 - 0.1)
}

/// Serializes file-provider content (useful for dumping vectors for replay).
pub fn write_embedding_text(entries: &[(String, Array2<f64>)]) -> String {
    let mut out = String::new();
    for (id, mat) in entries {
        out.push_str(&format!("#id {id}\n"));
        for row in mat.rows() {
            let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&fields.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.dot(&v) / (nu * nv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sentence(words: &[&str]) -> Sentence {
        Sentence::from_words("0", words)
    }

    #[test]
    fn hashed_rows_depend_only_on_form_and_seed() {
        let p = Provider::Hashed { d: 8, seed: 3 };
        let m = p.embed(&sentence(&["the", "cat", "the"])).unwrap();
        assert_eq!(m.row(0), m.row(2));
        assert_ne!(m.row(0), m.row(1));
        let again = p.embed(&sentence(&["the", "cat", "the"])).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn hashed_provider_changes_with_seed() {
        let a = Provider::Hashed { d: 8, seed: 3 }.embed(&sentence(&["x"])).unwrap();
        let b = Provider::Hashed { d: 8, seed: 4 }.embed(&sentence(&["x"])).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn file_provider_round_trip_and_errors() {
        let entries = vec![
            ("0".to_string(), array![[1.0, 2.0], [3.0, 4.0]]),
            ("1".to_string(), array![[0.5, -0.5]]),
        ];
        let text = write_embedding_text(&entries);
        let p = Provider::from_embedding_text(&text, 2).unwrap();
        let m = p.embed(&sentence(&["a", "b"])).unwrap();
        assert_eq!(m, array![[1.0, 2.0], [3.0, 4.0]]);

        let missing = Sentence::from_words("9", &["a"]);
        assert!(matches!(p.embed(&missing), Err(EmbeddingError::MissingSentence { .. })));

        let err = Provider::from_embedding_text(&text, 3).unwrap_err();
        assert!(matches!(err, EmbeddingError::Dimension { want: 3, got: 2 }));
    }

    #[test]
    fn lookup_shares_rows_per_type() {
        let corpus = vec![sentence(&["a", "b", "a"])];
        let table = LookupTable::build(&corpus, 4, 9);
        let p = Provider::Lookup(table);
        let m = p.embed(&sentence(&["a", "b", "a"])).unwrap();
        assert_eq!(m.row(0), m.row(2));
        // Unknown tokens hit the shared row 0.
        let u = p.embed(&sentence(&["zzz"])).unwrap();
        if let Provider::Lookup(t) = &p {
            assert_eq!(u.row(0), t.table.row(UNK_ROW));
        }
    }

    #[test]
    fn spec_parsing() {
        let s = ProviderSpec::parse("kind=hashed,d=16,seed=7").unwrap();
        assert_eq!(s, ProviderSpec::hashed(16, 7));
        assert_eq!(ProviderSpec::parse(&s.to_spec_string()).unwrap(), s);
        assert!(ProviderSpec::parse("kind=file,d=4").is_err());
        assert!(ProviderSpec::parse("d=4").is_err());
        assert!(ProviderSpec::parse("kind=hashed,d=0").is_err());
    }

    #[test]
    fn cosine_cases() {
        let u = array![1.0, 0.0];
        assert!((cosine(u.view(), u.view()) - 1.0).abs() < 1e-15);
        let v = array![0.0, 1.0];
        assert_eq!(cosine(u.view(), v.view()), 0.0);
        let w = array![1.0, 1.0];
        assert!((cosine(u.view(), w.view()) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        let z = array![0.0, 0.0];
        assert_eq!(cosine(u.view(), z.view()), 0.0);
    }
}

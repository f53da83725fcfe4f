//! Sentences, chunk tags, spans, and the CoNLL-2000 file format.
//!
//! Chunk type suffixes (`B-NP`, `I-VP`, ...) are dropped on read: everything
//! downstream works with untyped `B`/`I`/`O` tags. `O` tokens stay in the
//! sentence so token indices line up with trees and embeddings; callers that
//! need to skip them carry an [`OMask`] alongside.

use std::collections::BTreeSet;
use thiserror::Error;

/// Token indices a chunker must leave outside any chunk.
pub type OMask = BTreeSet<usize>;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: expected `word POS chunktag`, got {got:?}")]
    MalformedLine { line: usize, got: String },
    #[error("line {line}: unrecognized chunk tag {tag:?}")]
    UnknownTag { line: usize, tag: String },
    #[error("line {line}: empty token form")]
    EmptyForm { line: usize },
    #[error("invalid tag sequence at position {index}: {reason}")]
    InvalidTags { index: usize, reason: &'static str },
    #[error("span coverage error at token {index}: {reason}")]
    Coverage { index: usize, reason: &'static str },
    #[error("overlapping spans: [{a_start},{a_end}] and [{b_start},{b_end}]")]
    Overlap { a_start: usize, a_end: usize, b_start: usize, b_end: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    /// Part-of-speech tag, informational only.
    pub pos: Option<String>,
}

impl Token {
    pub fn new(form: impl Into<String>) -> Self {
        Token { form: form.into(), pos: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    /// Unique within a corpus; the readers assign running indices.
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn from_words<S: AsRef<str>>(id: impl Into<String>, words: &[S]) -> Self {
        Sentence {
            id: id.into(),
            tokens: words.iter().map(|w| Token::new(w.as_ref())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    B,
    I,
    O,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::B => "B",
            Tag::I => "I",
            Tag::O => "O",
        }
    }
}

/// A validated per-token tag sequence: the first non-`O` tag is `B`, and no
/// `I` directly follows an `O`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSeq(Vec<Tag>);

impl TagSeq {
    pub fn new(tags: Vec<Tag>) -> Result<Self, CorpusError> {
        validate_tags(&tags)?;
        Ok(TagSeq(tags))
    }

    /// Builds a valid sequence by rewriting any `I` at sentence start or
    /// after an `O` into `B`. Returns the number of rewrites.
    pub fn normalized(mut tags: Vec<Tag>) -> (Self, usize) {
        let mut fixes = 0;
        for i in 0..tags.len() {
            if tags[i] == Tag::I && (i == 0 || tags[i - 1] == Tag::O) {
                tags[i] = Tag::B;
                fixes += 1;
            }
        }
        (TagSeq(tags), fixes)
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices of `O` tokens.
    pub fn o_mask(&self) -> OMask {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == Tag::O)
            .map(|(i, _)| i)
            .collect()
    }

    /// Forces masked positions to `O`, then normalizes into a valid
    /// sequence. The usual last step of every chunker.
    pub fn masked_normalized(mut tags: Vec<Tag>, o_mask: &OMask) -> TagSeq {
        for (i, t) in tags.iter_mut().enumerate() {
            if o_mask.contains(&i) {
                *t = Tag::O;
            }
        }
        TagSeq::normalized(tags).0
    }
}

fn validate_tags(tags: &[Tag]) -> Result<(), CorpusError> {
    for (i, &t) in tags.iter().enumerate() {
        if t == Tag::I && (i == 0 || tags[i - 1] == Tag::O) {
            return Err(CorpusError::InvalidTags {
                index: i,
                reason: if i == 0 { "I at sentence start" } else { "I directly after O" },
            });
        }
    }
    Ok(())
}

/// Inclusive token span `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkSpan {
    pub start: usize,
    pub end: usize,
}

impl ChunkSpan {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "span start {start} > end {end}");
        ChunkSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Pairwise-disjoint spans sorted by start.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChunkSet(Vec<ChunkSpan>);

impl ChunkSet {
    pub fn new(mut spans: Vec<ChunkSpan>) -> Result<Self, CorpusError> {
        spans.sort();
        for w in spans.windows(2) {
            if w[1].start <= w[0].end {
                return Err(CorpusError::Overlap {
                    a_start: w[0].start,
                    a_end: w[0].end,
                    b_start: w[1].start,
                    b_end: w[1].end,
                });
            }
        }
        Ok(ChunkSet(spans))
    }

    pub fn spans(&self) -> &[ChunkSpan] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maximal `B I*` runs become spans; `O` tokens belong to no span.
pub fn tags_to_spans(tags: &TagSeq) -> ChunkSet {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.tags().iter().enumerate() {
        match t {
            Tag::B => {
                if let Some(s) = open.take() {
                    spans.push(ChunkSpan::new(s, i - 1));
                }
                open = Some(i);
            }
            Tag::I => {} // validated: always extends an open run
            Tag::O => {
                if let Some(s) = open.take() {
                    spans.push(ChunkSpan::new(s, i - 1));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(ChunkSpan::new(s, tags.len() - 1));
    }
    ChunkSet(spans)
}

/// Inverse of [`tags_to_spans`]: spans must cover exactly the tokens not in
/// `o_mask`.
pub fn spans_to_tags(chunks: &ChunkSet, n: usize, o_mask: &OMask) -> Result<TagSeq, CorpusError> {
    let mut tags: Vec<Option<Tag>> = vec![None; n];
    for span in chunks.spans() {
        if span.end >= n {
            return Err(CorpusError::Coverage { index: span.end, reason: "span past sentence end" });
        }
        for i in span.start..=span.end {
            if o_mask.contains(&i) {
                return Err(CorpusError::Coverage { index: i, reason: "span covers a masked token" });
            }
            if tags[i].is_some() {
                return Err(CorpusError::Coverage { index: i, reason: "token covered twice" });
            }
            tags[i] = Some(if i == span.start { Tag::B } else { Tag::I });
        }
    }
    let mut out = Vec::with_capacity(n);
    for (i, t) in tags.into_iter().enumerate() {
        match t {
            Some(t) => out.push(t),
            None if o_mask.contains(&i) => out.push(Tag::O),
            None => return Err(CorpusError::Coverage { index: i, reason: "token not covered" }),
        }
    }
    TagSeq::new(out)
}

/// Result of [`read_conll2000`]: sentences with their (possibly normalized)
/// tag sequences, plus how many tags had to be rewritten.
#[derive(Debug, Clone)]
pub struct ConllRead {
    pub items: Vec<(Sentence, TagSeq)>,
    pub normalized: usize,
}

/// Reads `word POS chunktag` lines, blank-line separated sentences.
///
/// Type suffixes are dropped (`B-NP` reads as `B`). An `I` at sentence start
/// or after `O` is rewritten to `B` and counted in `normalized` rather than
/// rejected, since model output files are not always well formed.
pub fn read_conll2000(text: &str) -> Result<ConllRead, CorpusError> {
    let mut items = Vec::new();
    let mut normalized = 0;
    let mut tokens: Vec<Token> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();

    let flush = |tokens: &mut Vec<Token>, tags: &mut Vec<Tag>, items: &mut Vec<(Sentence, TagSeq)>, normalized: &mut usize| {
        if tokens.is_empty() {
            return;
        }
        let id = items.len().to_string();
        let (seq, fixes) = TagSeq::normalized(std::mem::take(tags));
        *normalized += fixes;
        items.push((Sentence { id, tokens: std::mem::take(tokens) }, seq));
    };

    for (lineno, line) in text.lines().enumerate() {
        let line_1 = lineno + 1;
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut items, &mut normalized);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CorpusError::MalformedLine { line: line_1, got: line.to_string() });
        }
        let (form, pos, chunk) = (fields[0], fields[1], fields[2]);
        if form.is_empty() {
            return Err(CorpusError::EmptyForm { line: line_1 });
        }
        let tag = parse_chunk_tag(chunk)
            .ok_or_else(|| CorpusError::UnknownTag { line: line_1, tag: chunk.to_string() })?;
        tokens.push(Token { form: form.to_string(), pos: Some(pos.to_string()) });
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, &mut items, &mut normalized);
    Ok(ConllRead { items, normalized })
}

fn parse_chunk_tag(s: &str) -> Option<Tag> {
    match s {
        "O" => Some(Tag::O),
        _ if s == "B" || s.starts_with("B-") => Some(Tag::B),
        _ if s == "I" || s.starts_with("I-") => Some(Tag::I),
        _ => None,
    }
}

/// Canonical writer: `word POS tag` with single spaces, one blank line
/// between sentences, and a final newline after the last token line. Tokens
/// without a POS get `-`.
pub fn write_conll2000(items: &[(Sentence, TagSeq)]) -> String {
    let mut out = String::new();
    for (si, (sentence, tags)) in items.iter().enumerate() {
        if si > 0 {
            out.push('\n');
        }
        for (token, tag) in sentence.tokens.iter().zip(tags.tags()) {
            out.push_str(&token.form);
            out.push(' ');
            out.push_str(token.pos.as_deref().unwrap_or("-"));
            out.push(' ');
            out.push_str(tag.as_str());
            out.push('\n');
        }
    }
    out
}

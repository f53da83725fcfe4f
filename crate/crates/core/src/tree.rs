//! Binary constituency trees over token positions, plus the line-oriented
//! bracketed file format (`((a b) c)`, untyped, strictly binary).

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("line {line}, byte {pos}: unbalanced brackets")]
    Unbalanced { line: usize, pos: usize },
    #[error("line {line}, byte {pos}: node has {arity} children, expected 2")]
    Arity { line: usize, pos: usize, arity: usize },
    #[error("line {line}, byte {pos}: unexpected trailing input")]
    Trailing { line: usize, pos: usize },
    #[error("line {line}: empty tree")]
    Empty { line: usize },
    #[error("leaf indices are not 0..n in left-to-right order")]
    BadLeafOrder,
}

/// Strictly binary tree; leaves carry token positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BinaryTree {
    Leaf(usize),
    Node(Box<BinaryTree>, Box<BinaryTree>),
}

impl BinaryTree {
    pub fn node(left: BinaryTree, right: BinaryTree) -> Self {
        BinaryTree::Node(Box::new(left), Box::new(right))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, BinaryTree::Leaf(_))
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            BinaryTree::Leaf(_) => 1,
            BinaryTree::Node(l, r) => l.leaf_count() + r.leaf_count(),
        }
    }

    /// (leftmost leaf index, rightmost leaf index).
    pub fn span(&self) -> (usize, usize) {
        match self {
            BinaryTree::Leaf(i) => (*i, *i),
            BinaryTree::Node(l, r) => (l.span().0, r.span().1),
        }
    }

    /// All nodes in pre-order (root first).
    pub fn nodes(&self) -> Vec<&BinaryTree> {
        let mut out = Vec::new();
        fn walk<'a>(t: &'a BinaryTree, out: &mut Vec<&'a BinaryTree>) {
            out.push(t);
            if let BinaryTree::Node(l, r) = t {
                walk(l, out);
                walk(r, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Checks leaf indices are exactly `0..n` left to right; returns `n`.
    pub fn validate(&self) -> Result<usize, TreeError> {
        fn walk(t: &BinaryTree, next: &mut usize) -> bool {
            match t {
                BinaryTree::Leaf(i) => {
                    if *i != *next {
                        return false;
                    }
                    *next += 1;
                    true
                }
                BinaryTree::Node(l, r) => walk(l, next) && walk(r, next),
            }
        }
        let mut next = 0;
        if walk(self, &mut next) {
            Ok(next)
        } else {
            Err(TreeError::BadLeafOrder)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open(usize),
    Close(usize),
    Word(usize, &'a str),
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in line.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = word_start.take() {
                toks.push(Tok::Word(s, &line[s..i]));
            }
            if c == '(' {
                toks.push(Tok::Open(i));
            } else if c == ')' {
                toks.push(Tok::Close(i));
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(s) = word_start {
        toks.push(Tok::Word(s, &line[s..]));
    }
    toks
}

/// Parses one bracketed tree; returns the tree and its leaf words in order.
/// A bare token with no brackets parses as a single-leaf tree.
pub fn parse_tree(line: &str) -> Result<(BinaryTree, Vec<String>), TreeError> {
    parse_tree_at_line(line, 1)
}

fn parse_tree_at_line(line: &str, lineno: usize) -> Result<(BinaryTree, Vec<String>), TreeError> {
    let toks = tokenize(line);
    if toks.is_empty() {
        return Err(TreeError::Empty { line: lineno });
    }
    let mut words = Vec::new();
    let mut pos = 0usize;
    let tree = parse_node(&toks, &mut pos, &mut words, lineno)?;
    if pos != toks.len() {
        let at = match toks[pos] {
            Tok::Open(p) | Tok::Close(p) | Tok::Word(p, _) => p,
        };
        return Err(TreeError::Trailing { line: lineno, pos: at });
    }
    Ok((tree, words))
}

fn parse_node(
    toks: &[Tok<'_>],
    pos: &mut usize,
    words: &mut Vec<String>,
    lineno: usize,
) -> Result<BinaryTree, TreeError> {
    match toks.get(*pos) {
        None => Err(TreeError::Unbalanced { line: lineno, pos: usize::MAX }),
        Some(Tok::Word(_, w)) => {
            *pos += 1;
            words.push((*w).to_string());
            Ok(BinaryTree::Leaf(words.len() - 1))
        }
        Some(Tok::Close(p)) => Err(TreeError::Unbalanced { line: lineno, pos: *p }),
        Some(Tok::Open(open_at)) => {
            let open_at = *open_at;
            *pos += 1;
            let mut children = Vec::new();
            loop {
                match toks.get(*pos) {
                    None => return Err(TreeError::Unbalanced { line: lineno, pos: open_at }),
                    Some(Tok::Close(_)) => {
                        *pos += 1;
                        break;
                    }
                    _ => children.push(parse_node(toks, pos, words, lineno)?),
                }
            }
            if children.len() != 2 {
                return Err(TreeError::Arity { line: lineno, pos: open_at, arity: children.len() });
            }
            let right = children.pop().unwrap();
            let left = children.pop().unwrap();
            Ok(BinaryTree::node(left, right))
        }
    }
}

/// One tree per non-empty line.
pub fn read_trees(text: &str) -> Result<Vec<BinaryTree>, TreeError> {
    Ok(read_trees_with_words(text)?.into_iter().map(|(t, _)| t).collect())
}

/// Like [`read_trees`] but keeps the leaf words.
pub fn read_trees_with_words(text: &str) -> Result<Vec<(BinaryTree, Vec<String>)>, TreeError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_tree_at_line(line, lineno + 1)?);
    }
    Ok(out)
}

/// Renders with single spaces; single-leaf trees render as the bare word.
pub fn render_tree(tree: &BinaryTree, words: &[String]) -> String {
    match tree {
        BinaryTree::Leaf(i) => words[*i].clone(),
        BinaryTree::Node(l, r) => {
            format!("({} {})", render_tree(l, words), render_tree(r, words))
        }
    }
}

pub fn write_trees(items: &[(BinaryTree, Vec<String>)]) -> String {
    let mut out = String::new();
    for (tree, words) in items {
        out.push_str(&render_tree(tree, words));
        out.push('\n');
    }
    out
}

/// Uniformly random split points, leaves `offset..offset+n`.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> BinaryTree {
    assert!(n >= 1);
    fn build<R: Rng>(lo: usize, hi: usize, rng: &mut R) -> BinaryTree {
        if lo == hi {
            return BinaryTree::Leaf(lo);
        }
        let split = rng.random_range(lo..hi);
        BinaryTree::node(build(lo, split, rng), build(split + 1, hi, rng))
    }
    build(0, n - 1, rng)
}

/// Every binary tree shape over `n` leaves (Catalan(n-1) of them).
pub fn all_shapes(n: usize) -> Vec<BinaryTree> {
    assert!(n >= 1);
    fn build(lo: usize, hi: usize) -> Vec<BinaryTree> {
        if lo == hi {
            return vec![BinaryTree::Leaf(lo)];
        }
        let mut out = Vec::new();
        for split in lo..hi {
            for l in build(lo, split) {
                for r in build(split + 1, hi) {
                    out.push(BinaryTree::node(l.clone(), r.clone()));
                }
            }
        }
        out
    }
    build(0, n - 1)
}

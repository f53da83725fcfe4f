//! Chunk label induction from binary parse trees.
//!
//! A left-branching subtree has the shape `((..((w w) w)..) w)`: every right
//! child is a single word. Such runs tend to group closely related words, so
//! the main heuristic extracts the maximal left-branching subtrees of a parse
//! as chunks. Maximality is tree-internal: a left-branching subtree is
//! maximal when no left-branching subtree of the same tree strictly contains
//! it. Because any single leaf is left-branching, every leaf ends up in
//! exactly one extracted chunk, so each heuristic here partitions the
//! sentence.
//!
//! Two ablation variants are included: the mirror-image maximal
//! right-branching heuristic, and a small-chunk heuristic that keeps every
//! two-leaf subtree as a chunk and makes all remaining words singletons.

use crate::corpus::{ChunkSet, ChunkSpan};
use crate::tree::BinaryTree;

/// Leaf, or a node whose right child is a leaf and whose left child is
/// itself left-branching.
pub fn is_left_branching(t: &BinaryTree) -> bool {
    match t {
        BinaryTree::Leaf(_) => true,
        BinaryTree::Node(l, r) => r.is_leaf() && is_left_branching(l),
    }
}

/// Mirror image of [`is_left_branching`].
pub fn is_right_branching(t: &BinaryTree) -> bool {
    match t {
        BinaryTree::Leaf(_) => true,
        BinaryTree::Node(l, r) => l.is_leaf() && is_right_branching(r),
    }
}

fn harvest(t: &BinaryTree, pred: &dyn Fn(&BinaryTree) -> bool, out: &mut Vec<ChunkSpan>) {
    if pred(t) {
        let (s, e) = t.span();
        out.push(ChunkSpan::new(s, e));
        return;
    }
    if let BinaryTree::Node(l, r) = t {
        harvest(l, pred, out);
        harvest(r, pred, out);
    }
}

/// Spans of all maximal left-branching subtrees. The spans partition the
/// leaves: the top-down sweep stops at the first left-branching node on each
/// root-to-leaf path, and leaves themselves always qualify.
pub fn induce_left_branching(t: &BinaryTree) -> ChunkSet {
    let mut spans = Vec::new();
    harvest(t, &is_left_branching, &mut spans);
    ChunkSet::new(spans).expect("maximal subtree spans are disjoint")
}

/// Spans of all maximal right-branching subtrees; also a partition.
pub fn induce_right_branching(t: &BinaryTree) -> ChunkSet {
    let mut spans = Vec::new();
    harvest(t, &is_right_branching, &mut spans);
    ChunkSet::new(spans).expect("maximal subtree spans are disjoint")
}

/// Every two-leaf subtree becomes a chunk; every leaf not under one becomes
/// a singleton.
pub fn induce_small_chunks(t: &BinaryTree) -> ChunkSet {
    fn walk(t: &BinaryTree, out: &mut Vec<ChunkSpan>) {
        match t {
            BinaryTree::Leaf(i) => out.push(ChunkSpan::new(*i, *i)),
            BinaryTree::Node(l, r) => {
                if l.is_leaf() && r.is_leaf() {
                    let (s, e) = t.span();
                    out.push(ChunkSpan::new(s, e));
                } else {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
    }
    let mut spans = Vec::new();
    walk(t, &mut spans);
    ChunkSet::new(spans).expect("two-leaf subtrees and leftover leaves are disjoint")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_tree;

    fn spans_of(text: &str, f: fn(&BinaryTree) -> ChunkSet) -> Vec<(usize, usize)> {
        let (tree, _) = parse_tree(text).unwrap();
        f(&tree).spans().iter().map(|s| (s.start, s.end)).collect()
    }

    #[test]
    fn leaf_is_left_branching() {
        assert!(is_left_branching(&BinaryTree::Leaf(0)));
    }

    #[test]
    fn left_branching_shape_recognized() {
        let (t, _) = parse_tree("((a b) c)").unwrap();
        assert!(is_left_branching(&t));
        let (t, _) = parse_tree("(a (b c))").unwrap();
        assert!(!is_left_branching(&t));
        let (t, _) = parse_tree("(a b)").unwrap();
        assert!(is_left_branching(&t));
    }

    #[test]
    fn left_induction_examples() {
        assert_eq!(spans_of("((a b) c)", induce_left_branching), vec![(0, 2)]);
        assert_eq!(spans_of("(a (b c))", induce_left_branching), vec![(0, 0), (1, 2)]);
        assert_eq!(spans_of("(((a b) c) (d e))", induce_left_branching), vec![(0, 2), (3, 4)]);
    }

    #[test]
    fn right_induction_examples() {
        assert_eq!(spans_of("(a (b c))", induce_right_branching), vec![(0, 2)]);
        assert_eq!(spans_of("((a b) c)", induce_right_branching), vec![(0, 1), (2, 2)]);
        let single = induce_right_branching(&BinaryTree::Leaf(0));
        assert_eq!(single.spans(), &[ChunkSpan::new(0, 0)]);
    }

    #[test]
    fn small_chunk_examples() {
        assert_eq!(spans_of("((a b) c)", induce_small_chunks), vec![(0, 1), (2, 2)]);
        assert_eq!(spans_of("(a (b c))", induce_small_chunks), vec![(0, 0), (1, 2)]);
        assert_eq!(spans_of("((a b) (c d))", induce_small_chunks), vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn single_word_sentence_is_one_singleton() {
        let t = BinaryTree::Leaf(0);
        for f in [induce_left_branching, induce_right_branching, induce_small_chunks] {
            assert_eq!(f(&t).spans(), &[ChunkSpan::new(0, 0)]);
        }
    }

    #[test]
    fn identical_trees_give_identical_chunks() {
        let (tree, _) = parse_tree("(((a b) c) ((d e) (f g)))").unwrap();
        let copy = tree.clone();
        for f in [induce_left_branching, induce_right_branching, induce_small_chunks] {
            assert_eq!(f(&tree), f(&copy));
        }
    }
}

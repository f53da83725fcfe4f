use crate::util::{read_file, Ctx};
use anyhow::{Context, Result};
use clap::Args;
use std::path::PathBuf;
use uchunk_core::corpus::{spans_to_tags, write_conll2000, OMask, Sentence};
use uchunk_core::induction::{induce_left_branching, induce_right_branching, induce_small_chunks};
use uchunk_core::tree::read_trees_with_words;

#[derive(Args, Debug)]
pub struct InduceArgs {
    /// Bracketed trees, one per line.
    #[arg(long)]
    pub trees: PathBuf,
    /// Which subtrees become chunks.
    #[arg(long, value_parser = ["left", "right", "small"])]
    pub heuristic: String,
    /// CoNLL-format output (`-` for stdout).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: InduceArgs, ctx: &Ctx) -> Result<()> {
    let parsed = read_trees_with_words(&read_file(&args.trees)?)
        .with_context(|| format!("cannot parse trees file {}", args.trees.display()))?;
    let induce = match args.heuristic.as_str() {
        "left" => induce_left_branching,
        "right" => induce_right_branching,
        _ => induce_small_chunks,
    };
    let mut items = Vec::with_capacity(parsed.len());
    for (i, (tree, words)) in parsed.iter().enumerate() {
        tree.validate().with_context(|| format!("tree {} is malformed", i + 1))?;
        let chunks = induce(tree);
        let tags = spans_to_tags(&chunks, words.len(), &OMask::new())
            .expect("induced chunks partition the sentence");
        items.push((Sentence::from_words(i.to_string(), words), tags));
    }
    ctx.write_out(&args.out, &write_conll2000(&items))
}

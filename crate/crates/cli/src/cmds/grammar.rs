//! Grammar subcommands: `parse`, `pcfg-init`, `pcfg-em`, `gen`.

use crate::util::{read_file, read_text_sentences, require_seed, usage, Ctx};
use anyhow::{Context, Result};
use clap::Args;
use std::path::PathBuf;
use uchunk_core::corpus::{spans_to_tags, write_conll2000, OMask, Sentence};
use uchunk_core::grammar::{
    fit_em, random_pcfg_over, read_grammar, sample_corpus, viterbi_cyk, write_grammar, GrammarError,
};
use uchunk_core::induction::induce_left_branching;
use uchunk_core::tree::{render_tree, write_trees};

#[derive(Args, Debug)]
pub struct ParseArgs {
    /// Grammar file (ROOT/BIN/LEX lines).
    #[arg(long)]
    pub grammar: PathBuf,
    /// Plain text, one whitespace-tokenized sentence per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Trees output, one bracketed tree per line (`-` for stdout).
    #[arg(long)]
    pub out: PathBuf,
    /// Skip sentences with no parse (counted on stderr) instead of failing.
    #[arg(long)]
    pub skip_unparseable: bool,
    /// Map out-of-vocabulary words to this terminal while parsing.
    #[arg(long)]
    pub unk: Option<String>,
}

pub fn run_parse(args: ParseArgs, ctx: &Ctx) -> Result<()> {
    let grammar = read_grammar(&read_file(&args.grammar)?)
        .with_context(|| format!("cannot load grammar {}", args.grammar.display()))?;
    if let Some(unk) = &args.unk {
        if grammar.terminal_id(unk).is_none() {
            return Err(usage(format!("--unk terminal {unk:?} is not in the grammar vocabulary")));
        }
    }
    let sentences = read_text_sentences(&args.input)?;
    let mut skipped = 0usize;
    let mut out = String::new();
    for sentence in &sentences {
        let forms = sentence.forms();
        let lookup: Vec<&str> = match &args.unk {
            Some(unk) => forms
                .iter()
                .map(|w| if grammar.terminal_id(w).is_some() { *w } else { unk.as_str() })
                .collect(),
            None => forms.clone(),
        };
        match viterbi_cyk(&grammar, &lookup) {
            Ok((tree, _)) => {
                let words: Vec<String> = forms.iter().map(|w| w.to_string()).collect();
                out.push_str(&render_tree(&tree, &words));
                out.push('\n');
            }
            Err(e @ (GrammarError::NoParse { .. } | GrammarError::UnknownTerminal { .. }))
                if args.skip_unparseable =>
            {
                let _ = e;
                skipped += 1;
            }
            Err(e) => return Err(e).with_context(|| format!("sentence {}", sentence.id)),
        }
    }
    if skipped > 0 {
        eprintln!("note: skipped {skipped} unparseable sentences");
    }
    ctx.write_out(&args.out, &out)
}

#[derive(Args, Debug)]
pub struct PcfgInitArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    pub nonterminals: usize,
    #[arg(long, default_value_t = 3)]
    pub preterminals: usize,
    /// Take the terminal vocabulary from this text corpus.
    #[arg(long)]
    pub vocab_from: Option<PathBuf>,
    /// Comma-separated terminal vocabulary.
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_init(args: PcfgInitArgs, ctx: &Ctx) -> Result<()> {
    let seed = require_seed(args.seed, ctx, "pcfg-init")?;
    let terminals: Vec<String> = match (&args.vocab_from, &args.vocab) {
        (Some(path), None) => {
            let mut words: Vec<String> = read_text_sentences(path)?
                .iter()
                .flat_map(|s| s.tokens.iter().map(|t| t.form.clone()))
                .collect();
            words.sort();
            words.dedup();
            words
        }
        (None, Some(list)) => list.split(',').map(|w| w.trim().to_string()).filter(|w| !w.is_empty()).collect(),
        _ => return Err(usage("pcfg-init needs exactly one of --vocab-from or --vocab")),
    };
    if terminals.is_empty() {
        return Err(usage("empty terminal vocabulary"));
    }
    let grammar = random_pcfg_over(seed, args.nonterminals.max(1), args.preterminals.max(1), terminals);
    let text = format!("{}{}", ctx.provenance_header(), write_grammar(&grammar));
    ctx.write_out(&args.out, &text)
}

#[derive(Args, Debug)]
pub struct PcfgEmArgs {
    /// Initial grammar file.
    #[arg(long)]
    pub init: PathBuf,
    /// Training text, one sentence per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    /// Fitted grammar output.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration log-likelihood log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn run_em(args: PcfgEmArgs, ctx: &Ctx) -> Result<()> {
    let grammar = read_grammar(&read_file(&args.init)?)
        .with_context(|| format!("cannot load grammar {}", args.init.display()))?;
    let corpus: Vec<Vec<String>> = read_text_sentences(&args.input)?
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.form.clone()).collect())
        .collect();
    let fit = fit_em(&grammar, &corpus, args.iters)?;
    let text = format!("{}{}", ctx.provenance_header(), write_grammar(&fit.grammar));
    ctx.write_out(&args.out, &text)?;
    if let Some(log) = &args.log {
        let mut body = ctx.provenance_header();
        body.push_str("# iter log_likelihood\n");
        for (i, ll) in fit.log_likelihood.iter().enumerate() {
            body.push_str(&format!("{i} {ll}\n"));
        }
        ctx.write_out(log, &body)?;
    }
    if let (Some(first), Some(last)) = (fit.log_likelihood.first(), fit.log_likelihood.last()) {
        eprintln!("log-likelihood: {first} -> {last} over {} iterations", fit.log_likelihood.len());
    }
    if fit.skipped > 0 {
        eprintln!("note: {} sentences were unparseable and skipped", fit.skipped);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub grammar: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub min_len: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// Raw sentences, one per line.
    #[arg(long)]
    pub out_text: Option<PathBuf>,
    /// True parse trees.
    #[arg(long)]
    pub out_trees: Option<PathBuf>,
    /// CoNLL file with reference tags induced from the true trees
    /// (maximal left-branching).
    #[arg(long)]
    pub out_conll: Option<PathBuf>,
}

pub fn run_gen(args: GenArgs, ctx: &Ctx) -> Result<()> {
    let seed = require_seed(args.seed, ctx, "gen")?;
    if args.out_text.is_none() && args.out_trees.is_none() && args.out_conll.is_none() {
        return Err(usage("gen needs at least one of --out-text, --out-trees, --out-conll"));
    }
    let grammar = read_grammar(&read_file(&args.grammar)?)
        .with_context(|| format!("cannot load grammar {}", args.grammar.display()))?;
    let sampled = sample_corpus(&grammar, seed, args.count, args.min_len, args.max_len)?;

    if let Some(path) = &args.out_text {
        let mut text = String::new();
        for s in &sampled {
            text.push_str(&s.words.join(" "));
            text.push('\n');
        }
        ctx.write_out(path, &text)?;
    }
    if let Some(path) = &args.out_trees {
        let items: Vec<_> = sampled.iter().map(|s| (s.tree.clone(), s.words.clone())).collect();
        ctx.write_out(path, &write_trees(&items))?;
    }
    if let Some(path) = &args.out_conll {
        let items: Vec<_> = sampled
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let chunks = induce_left_branching(&s.tree);
                let tags = spans_to_tags(&chunks, s.words.len(), &OMask::new())
                    .expect("induced chunks partition the sentence");
                (Sentence::from_words(i.to_string(), &s.words), tags)
            })
            .collect();
        ctx.write_out(path, &write_conll2000(&items))?;
    }
    Ok(())
}

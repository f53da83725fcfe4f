//! `baseline pmi|hmm|lm` — fit, tune, and run the classical chunkers.

use crate::util::{parse_grid, read_conll_file, require_seed, usage, Ctx};
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use std::path::{Path, PathBuf};
use uchunk_core::baselines::{
    hmm_chunk, hmm_fit, lm_chunk, pmi_chunk, pmi_fit, select_state_tags, tune_tau, HmmModel, PmiModel,
};
use uchunk_core::corpus::{write_conll2000, Sentence, TagSeq};
use uchunk_core::embeddings::{Provider, ProviderSpec};
use uchunk_core::par;

#[derive(Subcommand, Debug)]
pub enum BaselineCmd {
    /// Cut where the pointwise mutual information of adjacent words is low.
    Pmi(PmiArgs),
    /// Baum-Welch HMM with a validation-selected state-to-tag map.
    Hmm(HmmArgs),
    /// Cut where the embedding similarity of adjacent words is low.
    Lm(LmArgs),
}

pub fn run(cmd: BaselineCmd, ctx: &Ctx) -> Result<()> {
    match cmd {
        BaselineCmd::Pmi(args) => run_pmi(args, ctx),
        BaselineCmd::Hmm(args) => run_hmm(args, ctx),
        BaselineCmd::Lm(args) => run_lm(args, ctx),
    }
}

fn chunk_and_write(
    ctx: &Ctx,
    input: &Path,
    out: &Path,
    chunk: impl Fn(&Sentence, &uchunk_core::corpus::OMask) -> Result<TagSeq> + Sync,
) -> Result<()> {
    let items = read_conll_file(input)?.items;
    let predicted: Result<Vec<TagSeq>> =
        par::map_ordered(&items, |(s, gold)| chunk(s, &gold.o_mask())).into_iter().collect();
    let out_items: Vec<_> = items
        .into_iter()
        .zip(predicted?)
        .map(|((sentence, _), tags)| (sentence, tags))
        .collect();
    ctx.write_out(out, &write_conll2000(&out_items))
}

#[derive(Args, Debug)]
pub struct PmiArgs {
    /// Unlabeled training CoNLL file (only the tokens are used).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Load a previously saved model instead of fitting.
    #[arg(long)]
    pub load_model: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Labeled validation CoNLL file for threshold tuning.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Fixed threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Threshold grid `lo:hi:step`, tuned on --val by phrase F1.
    #[arg(long, allow_hyphen_values = true)]
    pub tau_grid: Option<String>,
    #[arg(long)]
    pub lowercase: bool,
    /// Sentences to chunk.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Predicted CoNLL output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run_pmi(args: PmiArgs, ctx: &Ctx) -> Result<()> {
    let mut model: PmiModel = match (&args.load_model, &args.train) {
        (Some(path), _) => PmiModel::from_text(&crate::util::read_file(path)?)
            .with_context(|| format!("cannot load model {}", path.display()))?,
        (None, Some(train)) => {
            let sentences: Vec<Sentence> =
                read_conll_file(train)?.items.into_iter().map(|(s, _)| s).collect();
            pmi_fit(&sentences, args.lowercase)?
        }
        (None, None) => return Err(usage("baseline pmi needs --train or --load-model")),
    };

    match (&args.tau, &args.tau_grid) {
        (Some(tau), None) => model.tau = *tau,
        (None, Some(grid_text)) => {
            let grid = parse_grid(grid_text)?;
            let val_path = args.val.as_ref().ok_or_else(|| usage("--tau-grid needs --val"))?;
            let val = read_conll_file(val_path)?.items;
            let gold: Vec<TagSeq> = val.iter().map(|(_, t)| t.clone()).collect();
            let (tau, f1) = tune_tau(grid, &gold, |tau| {
                let mut m = model.clone();
                m.tau = tau;
                Ok(par::map_ordered(&val, |(s, gold)| pmi_chunk(&m, s, &gold.o_mask())))
            })?;
            eprintln!("selected tau {tau} (validation F1 {f1:.2})");
            model.tau = tau;
        }
        (None, None) => {}
        (Some(_), Some(_)) => return Err(usage("--tau and --tau-grid are mutually exclusive")),
    }

    if let Some(path) = &args.save_model {
        let body = format!("{}{}", ctx.provenance_header(), model.to_text());
        ctx.write_out(path, &body)?;
    }
    if let (Some(input), Some(out)) = (&args.input, &args.out) {
        chunk_and_write(ctx, input, out, |s, mask| Ok(pmi_chunk(&model, s, mask)))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct HmmArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub load_model: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Labeled validation file; selects the state-to-tag map by phrase F1.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden state count (at least 2).
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long)]
    pub lowercase: bool,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the per-iteration log-likelihood here.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn run_hmm(args: HmmArgs, ctx: &Ctx) -> Result<()> {
    let mut model: HmmModel = match (&args.load_model, &args.train) {
        (Some(path), _) => HmmModel::from_text(&crate::util::read_file(path)?)
            .with_context(|| format!("cannot load model {}", path.display()))?,
        (None, Some(train)) => {
            let seed = require_seed(args.seed, ctx, "baseline hmm")?;
            let sentences: Vec<Sentence> =
                read_conll_file(train)?.items.into_iter().map(|(s, _)| s).collect();
            let fit = hmm_fit(&sentences, args.states, seed, args.iters, args.lowercase)?;
            if let Some(log) = &args.log {
                let mut body = ctx.provenance_header();
                body.push_str("# iter log_likelihood\n");
                for (i, ll) in fit.log_likelihood.iter().enumerate() {
                    body.push_str(&format!("{i} {ll}\n"));
                }
                ctx.write_out(log, &body)?;
            }
            fit.model
        }
        (None, None) => return Err(usage("baseline hmm needs --train or --load-model")),
    };

    if let Some(val_path) = &args.val {
        let val = read_conll_file(val_path)?.items;
        let (tags, f1) = select_state_tags(&model, &val)?;
        let shown: Vec<&str> = tags.iter().map(|t| t.as_str()).collect();
        eprintln!("selected state tags [{}] (validation F1 {f1:.2})", shown.join(" "));
        model.state_tags = tags;
    }

    if let Some(path) = &args.save_model {
        let body = format!("{}{}", ctx.provenance_header(), model.to_text());
        ctx.write_out(path, &body)?;
    }
    if let (Some(input), Some(out)) = (&args.input, &args.out) {
        chunk_and_write(ctx, input, out, |s, mask| Ok(hmm_chunk(&model, s, mask)))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct LmArgs {
    /// Embedding provider spec, e.g. `kind=hashed,d=32,seed=1`.
    #[arg(long)]
    pub emb: Option<String>,
    /// Load a saved `emb`/`tau` pair instead of passing flags.
    #[arg(long)]
    pub load_model: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_grid: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_lm_model(text: &str) -> Result<(String, f64)> {
    let mut emb = None;
    let mut tau = None;
    let mut saw_header = false;
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            anyhow::ensure!(line == "lm-model v1", "expected `lm-model v1` header, found {line:?}");
            saw_header = true;
            continue;
        }
        if let Some(v) = line.strip_prefix("emb ") {
            emb = Some(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("tau ") {
            tau = Some(v.trim().parse::<f64>().context("bad tau in model file")?);
        }
    }
    Ok((
        emb.ok_or_else(|| anyhow::anyhow!("model file lacks emb"))?,
        tau.ok_or_else(|| anyhow::anyhow!("model file lacks tau"))?,
    ))
}

fn run_lm(args: LmArgs, ctx: &Ctx) -> Result<()> {
    let loaded = match &args.load_model {
        Some(path) => Some(read_lm_model(&crate::util::read_file(path)?)?),
        None => None,
    };
    let emb = match (&args.emb, &loaded) {
        (Some(e), _) => e.clone(),
        (None, Some((e, _))) => e.clone(),
        (None, None) => return Err(usage("baseline lm needs --emb or --load-model")),
    };
    let spec = ProviderSpec::parse(&emb)?;
    // Lookup vocabularies come from the sentences we are about to embed.
    let mut corpus: Vec<Sentence> = Vec::new();
    for path in [&args.val, &args.input].into_iter().flatten() {
        corpus.extend(read_conll_file(path)?.items.into_iter().map(|(s, _)| s));
    }
    let provider = Provider::build(&spec, &corpus)?;

    let tau = match (&args.tau, &args.tau_grid) {
        (Some(tau), None) => *tau,
        (None, Some(grid_text)) => {
            let grid = parse_grid(grid_text)?;
            let val_path = args.val.as_ref().ok_or_else(|| usage("--tau-grid needs --val"))?;
            let val = read_conll_file(val_path)?.items;
            let gold: Vec<TagSeq> = val.iter().map(|(_, t)| t.clone()).collect();
            let (tau, f1) = tune_tau(grid, &gold, |tau| {
                par::map_ordered(&val, |(s, gold)| lm_chunk(&provider, s, tau, &gold.o_mask()))
                    .into_iter()
                    .collect()
            })?;
            eprintln!("selected tau {tau} (validation F1 {f1:.2})");
            tau
        }
        (None, None) => match &loaded {
            Some((_, tau)) => *tau,
            None => return Err(usage("baseline lm needs --tau, --tau-grid, or --load-model")),
        },
        (Some(_), Some(_)) => return Err(usage("--tau and --tau-grid are mutually exclusive")),
    };

    if let Some(path) = &args.save_model {
        let body = format!("{}lm-model v1\nemb {emb}\ntau {tau}\n", ctx.provenance_header());
        ctx.write_out(path, &body)?;
    }
    if let (Some(input), Some(out)) = (&args.input, &args.out) {
        chunk_and_write(ctx, input, out, |s, mask| Ok(lm_chunk(&provider, s, tau, mask)?))?;
    }
    Ok(())
}

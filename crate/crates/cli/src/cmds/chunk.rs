use crate::util::{load_container, provider_from_container, Ctx};
use anyhow::{Context, Result};
use clap::Args;
use std::path::PathBuf;
use uchunk_core::corpus::write_conll2000;
use uchunk_core::hrnn::{chunk_corpus, HrnnParams};

#[derive(Args, Debug)]
pub struct ChunkArgs {
    /// Trained checkpoint (pretrained or finetuned).
    #[arg(long)]
    pub model: PathBuf,
    /// CoNLL input; gold tags supply the O mask.
    #[arg(long)]
    pub input: PathBuf,
    /// CoNLL output with predicted tags (`-` for stdout).
    #[arg(long)]
    pub out: PathBuf,
    /// Gate threshold; defaults to the value stored in the checkpoint.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Override the checkpoint's embedding spec.
    #[arg(long)]
    pub emb: Option<String>,
}

pub fn run(args: ChunkArgs, ctx: &Ctx) -> Result<()> {
    let container = load_container(&args.model)?;
    let params = HrnnParams::unpack(&container).context("checkpoint lacks chunker parameters")?;
    let (_, provider) = provider_from_container(&container, args.emb.as_deref())?;
    let force_first_cut = container
        .meta
        .get("force_first_cut")
        .map(|v| v == "true")
        .unwrap_or(true);
    let mut threshold = args.threshold;
    ctx.config.fill(&mut threshold, "threshold")?;
    let threshold = threshold
        .or_else(|| container.meta.get("threshold").and_then(|v| v.parse().ok()))
        .unwrap_or(0.5);

    let items = crate::util::read_conll_file(&args.input)?.items;
    let predicted = chunk_corpus(&params, &provider, &items, threshold, force_first_cut)?;
    let out_items: Vec<_> = items
        .into_iter()
        .zip(predicted)
        .map(|((sentence, _), tags)| (sentence, tags))
        .collect();
    ctx.write_out(&args.out, &write_conll2000(&out_items))
}

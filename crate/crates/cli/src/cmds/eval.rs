use crate::util::{read_conll_file, Ctx};
use anyhow::Result;
use clap::Args;
use std::path::{Path, PathBuf};
use uchunk_core::corpus::TagSeq;
use uchunk_core::eval::evaluate;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Gold CoNLL file.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted CoNLL file (same sentences, same O positions).
    #[arg(long)]
    pub pred: PathBuf,
    /// Machine-readable key-value report (`-` prints the human report only).
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

pub fn run(args: EvalArgs, ctx: &Ctx) -> Result<()> {
    let gold: Vec<TagSeq> = read_conll_file(&args.gold)?.items.into_iter().map(|(_, t)| t).collect();
    let pred: Vec<TagSeq> = read_conll_file(&args.pred)?.items.into_iter().map(|(_, t)| t).collect();
    let report = evaluate(&gold, &pred)?;
    println!("{report}");
    if args.out != Path::new("-") {
        let body = format!("{}{}", ctx.provenance_header(), report.to_kv());
        ctx.write_out(&args.out, &body)?;
    }
    Ok(())
}

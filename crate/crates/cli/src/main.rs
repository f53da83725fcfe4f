//! `uchunk` — unsupervised chunking pipeline in one binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Diagnostics go
//! to stderr; stdout carries data only for `--out -`.

mod cmds;
mod config;
mod util;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use util::UsageError;

#[derive(Parser, Debug)]
#[command(name = "uchunk", version, about = "Unsupervised chunking: induce, pretrain, finetune, chunk, evaluate")]
struct Cli {
    /// Worker threads for corpus-level loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Key = value file supplying defaults for flags not given explicitly.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory prepended to relative output paths.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Floating-point width for training math.
    #[arg(long, global = true, default_value = "f64", value_parser = ["f64", "f32"])]
    precision: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Induce chunk tags from a bracketed-trees file.
    Induce(cmds::induce::InduceArgs),
    /// Best-parse sentences with a grammar file (Viterbi CYK).
    Parse(cmds::grammar::ParseArgs),
    /// Write a random grammar over a vocabulary, for EM initialization.
    PcfgInit(cmds::grammar::PcfgInitArgs),
    /// Fit a grammar with inside-outside EM; logs per-iteration likelihood.
    PcfgEm(cmds::grammar::PcfgEmArgs),
    /// Sample a synthetic corpus (text, trees, reference tags) from a grammar.
    Gen(cmds::grammar::GenArgs),
    /// Pretrain the gated chunker on induced labels.
    Pretrain(cmds::pretrain::PretrainArgs),
    /// Finetune a pretrained chunker through a toy transduction task.
    Finetune(cmds::finetune::FinetuneArgs),
    /// Tag sentences with a trained chunker checkpoint.
    Chunk(cmds::chunk::ChunkArgs),
    /// Score predictions against gold tags (exact-span F1, tag accuracy).
    Eval(cmds::eval::EvalArgs),
    /// Classical unsupervised chunkers.
    #[command(subcommand)]
    Baseline(cmds::baseline::BaselineCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.precision == "f32" {
        eprintln!("usage error: --precision f32 is not supported by this build; training math is 64-bit");
        return ExitCode::from(2);
    }

    let cfg = match config::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };

    let threads = cli.threads.or_else(|| cfg.get_parsed("threads").ok().flatten());
    if let Err(e) = init_threads(threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }

    let ctx = util::Ctx { out_dir: cli.out_dir.clone(), argv: std::env::args().collect(), config: cfg };
    let result = match cli.command {
        Command::Induce(args) => cmds::induce::run(args, &ctx),
        Command::Parse(args) => cmds::grammar::run_parse(args, &ctx),
        Command::PcfgInit(args) => cmds::grammar::run_init(args, &ctx),
        Command::PcfgEm(args) => cmds::grammar::run_em(args, &ctx),
        Command::Gen(args) => cmds::grammar::run_gen(args, &ctx),
        Command::Pretrain(args) => cmds::pretrain::run(args, &ctx),
        Command::Finetune(args) => cmds::finetune::run(args, &ctx),
        Command::Chunk(args) => cmds::chunk::run(args, &ctx),
        Command::Eval(args) => cmds::eval::run(args, &ctx),
        Command::Baseline(cmd) => cmds::baseline::run(cmd, &ctx),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(usage) = e.downcast_ref::<UsageError>() {
                eprintln!("usage error: {usage}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot configure {n} worker threads: {e}"))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n > 1 {
            eprintln!("note: built without the `parallel` feature; --threads {n} is ignored");
        }
    }
    Ok(())
}

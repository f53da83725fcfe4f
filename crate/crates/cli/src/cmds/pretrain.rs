use crate::util::{pack_provider, read_conll_file, require_seed, Ctx};
use anyhow::{Context, Result};
use clap::Args;
use std::path::PathBuf;
use uchunk_core::corpus::Sentence;
use uchunk_core::embeddings::{Provider, ProviderSpec};
use uchunk_core::hrnn::{train_pretrain, Container, HrnnParams, PretrainConfig};

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Training CoNLL file with (induced) chunk tags.
    #[arg(long)]
    pub train: PathBuf,
    /// Labeled validation CoNLL file; logs phrase F1 per epoch.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Embedding provider, e.g. `kind=hashed,d=32,seed=1`.
    #[arg(long)]
    pub emb: Option<String>,
    /// Hidden state size of both RNN levels.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Decode threshold for validation F1.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Do not clamp the first gate to a cut during training and decoding.
    #[arg(long)]
    pub no_force_first_cut: bool,
    /// Checkpoint output.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss / validation log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn run(args: PretrainArgs, ctx: &Ctx) -> Result<()> {
    let seed = require_seed(args.seed, ctx, "pretrain")?;
    let mut emb = args.emb;
    ctx.config.fill(&mut emb, "emb")?;
    let spec = ProviderSpec::parse(&emb.unwrap_or_else(|| "kind=hashed,d=32,seed=0".to_string()))?;
    let mut hidden = args.hidden;
    ctx.config.fill(&mut hidden, "hidden")?;
    let mut epochs = args.epochs;
    ctx.config.fill(&mut epochs, "epochs")?;
    let mut batch = args.batch;
    ctx.config.fill(&mut batch, "batch")?;
    let mut lr = args.lr;
    ctx.config.fill(&mut lr, "lr")?;
    let mut threshold = args.threshold;
    ctx.config.fill(&mut threshold, "threshold")?;

    let train = read_conll_file(&args.train)?.items;
    let val = match &args.val {
        Some(path) => Some(read_conll_file(path)?.items),
        None => None,
    };

    let sentences: Vec<Sentence> = train.iter().map(|(s, _)| s.clone()).collect();
    let mut provider = Provider::build(&spec, &sentences)?;
    let mut params = HrnnParams::init(spec.d, hidden.unwrap_or(32), seed);
    let cfg = PretrainConfig {
        epochs: epochs.unwrap_or(50),
        batch_size: batch.unwrap_or(16),
        lr: lr.unwrap_or(0.01),
        seed,
        force_first_cut: !args.no_force_first_cut,
        threshold: threshold.unwrap_or(0.5),
    };
    let outcome = train_pretrain(&mut params, &mut provider, &train, val.as_deref(), &cfg)
        .context("pretraining failed")?;

    for record in &outcome.epochs {
        match record.val_f1 {
            Some(f1) => eprintln!("epoch {:>4}  loss {:<12.6} val F1 {:.2}", record.epoch, record.train_loss, f1),
            None => eprintln!("epoch {:>4}  loss {:.6}", record.epoch, record.train_loss),
        }
    }

    let mut container = Container::default();
    params.pack(&mut container);
    pack_provider(&spec, &provider, &mut container);
    container.meta.insert("force_first_cut".to_string(), (!args.no_force_first_cut).to_string());
    container.meta.insert("threshold".to_string(), cfg.threshold.to_string());
    ctx.write_out(&args.out, &container.to_text(&ctx.provenance()))?;

    if let Some(log) = &args.log {
        let mut body = ctx.provenance_header();
        body.push_str("# epoch train_loss val_f1\n");
        for r in &outcome.epochs {
            let f1 = r.val_f1.map(|v| format!("{v}")).unwrap_or_else(|| "-".to_string());
            body.push_str(&format!("{} {} {}\n", r.epoch, r.train_loss, f1));
        }
        ctx.write_out(log, &body)?;
    }
    Ok(())
}

use crate::util::{load_container, pack_provider, provider_from_container, require_seed, usage, Ctx};
use anyhow::{Context, Result};
use clap::Args;
use std::path::PathBuf;
use uchunk_core::finetune::{
    finetune_loop, generate_examples, task_vocabulary, write_curves, DecoderParams, FinetuneConfig,
    TaskKind, ToyTask,
};
use uchunk_core::hrnn::{Container, HrnnParams};

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// Pretrained checkpoint to start from.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Ignore the checkpoint weights and start from a random chunker
    /// (ablation; the embedding provider is still taken from the checkpoint).
    #[arg(long)]
    pub scratch: bool,
    /// Transduction task driving the weak supervision.
    #[arg(long, value_parser = ["copy", "reverse", "chunk-heads"])]
    pub task: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub eval_count: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Attention reweighting coefficient.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Auxiliary loss weight.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Fraction of gates pulled toward 1 by the auxiliary loss.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub dk: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Override the checkpoint's embedding spec.
    #[arg(long)]
    pub emb: Option<String>,
    /// Curves output: step,task_loss,phrase_f1,tag_acc,mean_gate,polarized_frac.
    #[arg(long)]
    pub curves: PathBuf,
    /// Best-F1 checkpoint output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the final-step checkpoint here.
    #[arg(long)]
    pub out_final: Option<PathBuf>,
}

pub fn run(args: FinetuneArgs, ctx: &Ctx) -> Result<()> {
    let seed = require_seed(args.seed, ctx, "finetune")?;
    let kind = TaskKind::parse(&args.task).ok_or_else(|| usage(format!("unknown task {:?}", args.task)))?;

    let container = load_container(&args.ckpt)?;
    let (spec, mut provider) = provider_from_container(&container, args.emb.as_deref())?;
    let stored = HrnnParams::unpack(&container).context("checkpoint lacks chunker parameters")?;
    let mut hrnn = if args.scratch { HrnnParams::init(stored.d, stored.h, seed) } else { stored };
    let force_first_cut = container
        .meta
        .get("force_first_cut")
        .map(|v| v == "true")
        .unwrap_or(true);

    let mut opts = FinetuneOpts::default();
    opts.fill(&args, ctx)?;
    let cfg = FinetuneConfig {
        gamma: opts.gamma,
        eta: opts.eta,
        kappa: opts.kappa,
        lr: opts.lr,
        steps: opts.steps,
        batch_size: opts.batch,
        eval_every: opts.eval_every,
        seed,
        force_first_cut,
        threshold: opts.threshold,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let task = ToyTask { kind, seed };
    let train = generate_examples(&task, opts.train_count, "train")?;
    let eval_task = ToyTask { kind, seed: seed.wrapping_add(0x9e37_79b9) };
    let eval_set = generate_examples(&eval_task, opts.eval_count, "eval")?;

    let mut decoder = DecoderParams::init(opts.heads, opts.dk, hrnn.h, task_vocabulary(), seed.wrapping_add(1));
    let outcome = finetune_loop(&mut hrnn, &mut decoder, &mut provider, &train, &eval_set, &cfg)
        .context("finetuning failed")?;

    eprintln!(
        "best phrase F1 {:.2} at step {}; final step {}",
        outcome.best_f1,
        outcome.best_step,
        cfg.steps
    );

    let curves_text = format!("{}{}", ctx.provenance_header(), write_curves(&outcome.curves));
    ctx.write_out(&args.curves, &curves_text)?;

    let save = |hrnn: &HrnnParams,
                dec: &DecoderParams,
                prov: &uchunk_core::embeddings::Provider,
                path: &PathBuf|
     -> Result<()> {
        let mut c = Container::default();
        hrnn.pack(&mut c);
        pack_provider(&spec, prov, &mut c);
        c.meta.insert("force_first_cut".to_string(), force_first_cut.to_string());
        c.meta.insert("threshold".to_string(), cfg.threshold.to_string());
        pack_decoder(dec, &mut c);
        ctx.write_out(path, &c.to_text(&ctx.provenance()))
    };
    // The best checkpoint pairs the best parameters with the lookup table
    // as it was at that step.
    let mut best_provider = provider.clone();
    if let (uchunk_core::embeddings::Provider::Lookup(t), Some(table)) =
        (&mut best_provider, &outcome.best_lookup)
    {
        t.table = table.clone();
    }
    save(&outcome.best_hrnn, &outcome.best_decoder, &best_provider, &args.out)?;
    if let Some(path) = &args.out_final {
        save(&hrnn, &decoder, &provider, path)?;
    }
    Ok(())
}

struct FinetuneOpts {
    train_count: usize,
    eval_count: usize,
    steps: usize,
    batch: usize,
    eval_every: usize,
    lr: f64,
    gamma: f64,
    eta: f64,
    kappa: f64,
    heads: usize,
    dk: usize,
    threshold: f64,
}

impl Default for FinetuneOpts {
    fn default() -> Self {
        FinetuneOpts {
            train_count: 64,
            eval_count: 32,
            steps: 400,
            batch: 8,
            eval_every: 40,
            lr: 0.002,
            gamma: 0.1,
            eta: 0.1,
            kappa: 0.5,
            heads: 1,
            dk: 16,
            threshold: 0.5,
        }
    }
}

impl FinetuneOpts {
    fn fill(&mut self, args: &FinetuneArgs, ctx: &Ctx) -> Result<()> {
        macro_rules! merge {
            ($field:ident, $key:literal) => {
                let mut v = args.$field;
                ctx.config.fill(&mut v, $key)?;
                if let Some(v) = v {
                    self.$field = v;
                }
            };
        }
        merge!(train_count, "train-count");
        merge!(eval_count, "eval-count");
        merge!(steps, "steps");
        merge!(batch, "batch");
        merge!(eval_every, "eval-every");
        merge!(lr, "lr");
        merge!(gamma, "gamma");
        merge!(eta, "eta");
        merge!(kappa, "kappa");
        merge!(heads, "heads");
        merge!(dk, "dk");
        merge!(threshold, "threshold");
        Ok(())
    }
}

pub(crate) fn pack_decoder(dec: &DecoderParams, c: &mut Container) {
    c.meta.insert("dec_heads".to_string(), dec.n_heads.to_string());
    c.meta.insert("dec_dk".to_string(), dec.d_k.to_string());
    c.tensors.insert("decoder.w_q".to_string(), dec.w_q.clone());
    c.tensors.insert("decoder.w_k".to_string(), dec.w_k.clone());
    c.tensors.insert("decoder.w_v".to_string(), dec.w_v.clone());
    c.tensors.insert("decoder.w_o".to_string(), dec.w_o.clone());
    c.tensors.insert("decoder.b_o".to_string(), dec.b_o.clone().insert_axis(ndarray::Axis(0)));
    c.tensors.insert("decoder.w_out".to_string(), dec.w_out.clone());
    c.tensors.insert("decoder.b_out".to_string(), dec.b_out.clone().insert_axis(ndarray::Axis(0)));
    c.tensors.insert("decoder.embed".to_string(), dec.embed.clone());
    let vocab: std::collections::BTreeMap<String, usize> =
        dec.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    c.vocabs.insert("decoder.vocab".to_string(), vocab);
}

//! Corpus-level throughput with and without data parallelism.
//!
//! With the default `parallel` feature the same workload runs under rayon
//! pools of different sizes (1 thread approximates the sequential build plus
//! pool overhead). Build with `--no-default-features` to benchmark the true
//! sequential fallback; criterion keeps baselines across runs, so the two
//! builds can be compared with identical benchmark names.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uchunk_core::baselines::hmm_fit;
use uchunk_core::corpus::{spans_to_tags, OMask, Sentence, TagSeq};
use uchunk_core::embeddings::Provider;
use uchunk_core::grammar::{em_step, random_pcfg, sample_corpus};
use uchunk_core::hrnn::{train_pretrain, HrnnParams, PretrainConfig};
use uchunk_core::induction::induce_left_branching;

struct Workload {
    corpus_words: Vec<Vec<String>>,
    sentences: Vec<Sentence>,
    labeled: Vec<(Sentence, TagSeq)>,
    grammar: uchunk_core::grammar::Pcfg,
}

fn build_workload() -> Workload {
    let grammar = random_pcfg(11, 2, 3, 6);
    let sampled = sample_corpus(&grammar, 5, 160, 2, 14).expect("sampling succeeds");
    let corpus_words: Vec<Vec<String>> = sampled.iter().map(|s| s.words.clone()).collect();
    let sentences: Vec<Sentence> = sampled
        .iter()
        .enumerate()
        .map(|(i, s)| Sentence::from_words(i.to_string(), &s.words))
        .collect();
    let labeled: Vec<(Sentence, TagSeq)> = sampled
        .iter()
        .zip(&sentences)
        .map(|(s, sentence)| {
            let chunks = induce_left_branching(&s.tree);
            let tags = spans_to_tags(&chunks, s.words.len(), &OMask::new()).unwrap();
            (sentence.clone(), tags)
        })
        .collect();
    Workload { corpus_words, sentences, labeled, grammar }
}

fn run_em(w: &Workload) {
    let step = em_step(&w.grammar, &w.corpus_words).unwrap();
    assert!(step.log_likelihood.is_finite());
}

fn run_hmm(w: &Workload) {
    let fit = hmm_fit(&w.sentences, 2, 3, 4, false).unwrap();
    assert_eq!(fit.log_likelihood.len(), 4);
}

fn run_pretrain_epoch(w: &Workload) {
    let mut params = HrnnParams::init(12, 12, 1);
    let mut provider = Provider::Hashed { d: 12, seed: 2 };
    let cfg = PretrainConfig { epochs: 1, batch_size: 16, lr: 0.01, seed: 3, ..Default::default() };
    train_pretrain(&mut params, &mut provider, &w.labeled, None, &cfg).unwrap();
}

#[cfg(feature = "parallel")]
fn bench_workloads(c: &mut Criterion) {
    let w = build_workload();
    let max_threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2);
    let mut candidates = vec![1, 2, max_threads];
    candidates.dedup();
    for (name, run) in [
        ("pcfg_em_step", run_em as fn(&Workload)),
        ("hmm_fit_4_iters", run_hmm as fn(&Workload)),
        ("pretrain_epoch", run_pretrain_epoch as fn(&Workload)),
    ] {
        let mut group = c.benchmark_group(name);
        for &threads in &candidates {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            group.bench_with_input(BenchmarkId::new("threads", threads), &threads, |b, _| {
                b.iter(|| pool.install(|| run(&w)));
            });
        }
        group.finish();
    }
}

#[cfg(not(feature = "parallel"))]
fn bench_workloads(c: &mut Criterion) {
    let w = build_workload();
    for (name, run) in [
        ("pcfg_em_step", run_em as fn(&Workload)),
        ("hmm_fit_4_iters", run_hmm as fn(&Workload)),
        ("pretrain_epoch", run_pretrain_epoch as fn(&Workload)),
    ] {
        let mut group = c.benchmark_group(name);
        group.bench_function("sequential", |b| b.iter(|| run(&w)));
        group.finish();
    }
}

criterion_group!(benches, bench_workloads);
criterion_main!(benches);

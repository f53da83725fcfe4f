//! Command-line contract tests: exit codes, determinism, output routing,
//! config-file precedence, and pipeline consistency.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uchunk"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn tiny_grammar() -> &'static str {
    "ROOT S 1\nBIN S NP VP 1\nBIN NP DT NN 1\nBIN VP VB NP 1\n\
     LEX DT the 0.6\nLEX DT a 0.4\nLEX NN cat 0.5\nLEX NN dog 0.5\n\
     LEX VB sees 0.5\nLEX VB likes 0.5\n"
}

#[test]
fn missing_seed_is_usage_error_2() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "train.conll", "a X B\nb Y I\n");
    let out = run(&["pretrain", "--train", "train.conll", "--out", "x.ckpt"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn runtime_failure_is_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["eval", "--gold", "nope.conll", "--pred", "nope.conll"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["induce", "--no-such-flag"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn induce_examples() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t1.txt", "((a b) c)\n");
    let out = run(&["induce", "--trees", "t1.txt", "--heuristic", "left", "--out", "-"], tmp.path());
    assert_ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "a - B\nb - I\nc - I\n");

    write(tmp.path(), "t2.txt", "(a (b c))\n");
    let out = run(&["induce", "--trees", "t2.txt", "--heuristic", "right", "--out", "-"], tmp.path());
    assert_ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "a - B\nb - I\nc - I\n");

    write(tmp.path(), "t3.txt", "((a b) (c d))\n");
    let out = run(&["induce", "--trees", "t3.txt", "--heuristic", "small", "--out", "-"], tmp.path());
    assert_ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "a - B\nb - I\nc - B\nd - I\n");
}

#[test]
fn stdout_stays_clean_unless_dash() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "t.txt", "((a b) c)\n");
    let out = run(&["induce", "--trees", "t.txt", "--heuristic", "left", "--out", "tags.conll"], tmp.path());
    assert_ok(&out);
    assert!(out.stdout.is_empty(), "data must not leak to stdout");
    assert!(tmp.path().join("tags.conll").exists());
}

#[test]
fn parse_output_is_deterministic_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "g.grammar", tiny_grammar());
    write(tmp.path(), "in.txt", "the cat sees a dog\na dog likes the cat\n");
    let args = ["parse", "--grammar", "g.grammar", "--input", "in.txt", "--out", "-"];
    let a = run(&args, tmp.path());
    let b = run(&args, tmp.path());
    assert_ok(&a);
    assert_eq!(a.stdout, b.stdout);
    let one = bin().args(["--threads", "1"]).args(args).current_dir(tmp.path()).output().unwrap();
    let four = bin().args(["--threads", "4"]).args(args).current_dir(tmp.path()).output().unwrap();
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(a.stdout, one.stdout);
}

#[test]
fn em_runs_are_bit_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "g.grammar", tiny_grammar());
    write(tmp.path(), "in.txt", "the cat sees a dog\na dog likes the cat\nthe dog sees the cat\n");
    for (threads, out_name) in [("1", "f1.grammar"), ("4", "f4.grammar")] {
        let out = bin()
            .args(["--threads", threads, "pcfg-em", "--init", "g.grammar", "--input", "in.txt", "--iters", "8", "--out", out_name])
            .current_dir(tmp.path())
            .output()
            .unwrap();
        assert_ok(&out);
    }
    let strip_header = |p: &Path| -> String {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_header(&tmp.path().join("f1.grammar")), strip_header(&tmp.path().join("f4.grammar")));
}

#[test]
fn config_file_supplies_defaults_but_flags_win() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "g.grammar", tiny_grammar());
    write(tmp.path(), "run.config", "seed = 4\n");
    // Seed comes from the config.
    let out = run(
        &["--config", "run.config", "gen", "--grammar", "g.grammar", "--count", "2", "--out-text", "a.txt"],
        tmp.path(),
    );
    assert_ok(&out);
    // Explicit flag overrides; a different seed gives a different corpus.
    let out = run(
        &["--config", "run.config", "gen", "--grammar", "g.grammar", "--count", "2", "--seed", "9", "--out-text", "b.txt"],
        tmp.path(),
    );
    assert_ok(&out);
    let explicit = run(
        &["gen", "--grammar", "g.grammar", "--count", "2", "--seed", "4", "--out-text", "c.txt"],
        tmp.path(),
    );
    assert_ok(&explicit);
    let a = std::fs::read_to_string(tmp.path().join("a.txt")).unwrap();
    let b = std::fs::read_to_string(tmp.path().join("b.txt")).unwrap();
    let c = std::fs::read_to_string(tmp.path().join("c.txt")).unwrap();
    assert_eq!(a, c, "config seed 4 must equal explicit seed 4");
    assert_ne!(a, b, "explicit seed 9 must override config seed 4");
}

#[test]
fn generated_files_carry_provenance_headers() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "in.txt", "a b\nb a\n");
    let out = run(
        &["pcfg-init", "--seed", "1", "--vocab-from", "in.txt", "--out", "g.grammar"],
        tmp.path(),
    );
    assert_ok(&out);
    let text = std::fs::read_to_string(tmp.path().join("g.grammar")).unwrap();
    assert!(text.starts_with("# uchunk "), "grammar header: {}", text.lines().next().unwrap());
    assert!(text.contains("# invocation: "));
}

#[test]
fn skip_unparseable_counts_and_skips() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "g.grammar", tiny_grammar());
    write(tmp.path(), "in.txt", "the cat sees a dog\nzzz yyy\n");
    let strict = run(&["parse", "--grammar", "g.grammar", "--input", "in.txt", "--out", "-"], tmp.path());
    assert_eq!(strict.status.code(), Some(1));
    let lenient = run(
        &["parse", "--grammar", "g.grammar", "--input", "in.txt", "--out", "-", "--skip-unparseable"],
        tmp.path(),
    );
    assert_ok(&lenient);
    assert_eq!(String::from_utf8_lossy(&lenient.stdout).lines().count(), 1);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("skipped 1"));
}

#[test]
fn chunk_then_eval_reproduces_training_f1() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "g.grammar", tiny_grammar());
    for (seed, name) in [(3, "train.conll"), (4, "val.conll")] {
        let out = run(
            &["gen", "--grammar", "g.grammar", "--count", "24", "--seed", &seed.to_string(), "--out-conll", name],
            tmp.path(),
        );
        assert_ok(&out);
    }
    let out = run(
        &[
            "pretrain", "--train", "train.conll", "--val", "val.conll",
            "--emb", "kind=hashed,d=8,seed=1", "--hidden", "8", "--seed", "5",
            "--epochs", "12", "--batch", "8", "--lr", "0.02",
            "--out", "m.ckpt", "--log", "train.log",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let log = std::fs::read_to_string(tmp.path().join("train.log")).unwrap();
    let last = log.lines().rfind(|l| !l.starts_with('#')).unwrap().to_string();
    let logged_f1: f64 = last.split_whitespace().nth(2).unwrap().parse().unwrap();

    let out = run(&["chunk", "--model", "m.ckpt", "--input", "val.conll", "--out", "pred.conll"], tmp.path());
    assert_ok(&out);
    let out = run(
        &["eval", "--gold", "val.conll", "--pred", "pred.conll", "--out", "report.kv"],
        tmp.path(),
    );
    assert_ok(&out);
    let kv = std::fs::read_to_string(tmp.path().join("report.kv")).unwrap();
    let eval_f1: f64 = kv
        .lines()
        .find(|l| l.starts_with("f1 "))
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(
        (logged_f1 - eval_f1).abs() < 0.005,
        "training-time F1 {logged_f1} vs pipeline F1 {eval_f1}"
    );
}

#[test]
fn checkpoints_reload_exactly() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "g.grammar", tiny_grammar());
    let out = run(
        &["gen", "--grammar", "g.grammar", "--count", "10", "--seed", "3", "--out-conll", "train.conll"],
        tmp.path(),
    );
    assert_ok(&out);
    let out = run(
        &[
            "pretrain", "--train", "train.conll", "--emb", "kind=lookup,d=6,seed=2",
            "--hidden", "6", "--seed", "5", "--epochs", "3", "--batch", "4", "--out", "m.ckpt",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    // Chunking twice from the same checkpoint is byte-identical.
    let a = run(&["chunk", "--model", "m.ckpt", "--input", "train.conll", "--out", "-"], tmp.path());
    let b = run(&["chunk", "--model", "m.ckpt", "--input", "train.conll", "--out", "-"], tmp.path());
    assert_ok(&a);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn tau_grid_reports_selection() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "g.grammar", tiny_grammar());
    for (seed, name) in [(3, "train.conll"), (4, "val.conll")] {
        let out = run(
            &["gen", "--grammar", "g.grammar", "--count", "20", "--seed", &seed.to_string(), "--out-conll", name],
            tmp.path(),
        );
        assert_ok(&out);
    }
    let out = run(
        &[
            "baseline", "pmi", "--train", "train.conll", "--val", "val.conll",
            "--tau-grid", "-5:5:0.5", "--input", "val.conll", "--out", "pred.conll",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("selected tau"), "stderr: {stderr}");
    assert!(tmp.path().join("pred.conll").exists());
}

#[test]
fn baseline_lm_requires_threshold_choice() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "in.conll", "a X B\nb Y I\n");
    let out = run(
        &["baseline", "lm", "--emb", "kind=hashed,d=4,seed=1", "--input", "in.conll", "--out", "p.conll"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

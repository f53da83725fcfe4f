//! Shared CLI plumbing: output resolution, provenance headers, file
//! readers, and checkpoint glue for embedding providers.

use crate::config::ConfigMap;
use anyhow::{Context, Result};
use std::fmt;
use std::path::{Path, PathBuf};
use uchunk_core::corpus::{read_conll2000, ConllRead, Sentence};
use uchunk_core::embeddings::{LookupTable, Provider, ProviderSpec};
use uchunk_core::hrnn::Container;

/// Errors that should exit with code 2 (bad invocation, not bad data).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

pub struct Ctx {
    pub out_dir: Option<PathBuf>,
    pub argv: Vec<String>,
    pub config: ConfigMap,
}

impl Ctx {
    /// Provenance lines for output files whose formats allow comments.
    pub fn provenance(&self) -> Vec<String> {
        vec![
            format!("uchunk {}", env!("CARGO_PKG_VERSION")),
            format!("invocation: {}", self.argv.join(" ")),
        ]
    }

    pub fn provenance_header(&self) -> String {
        self.provenance().iter().map(|l| format!("# {l}\n")).collect()
    }

    /// Applies `--out-dir` to relative paths; `-` (stdout) passes through.
    pub fn resolve_out(&self, path: &Path) -> PathBuf {
        if path == Path::new("-") {
            return path.to_path_buf();
        }
        match (&self.out_dir, path.is_relative()) {
            (Some(dir), true) => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Writes `content` to the resolved path, or to stdout for `-`.
    pub fn write_out(&self, path: &Path, content: &str) -> Result<()> {
        let path = self.resolve_out(path);
        if path == Path::new("-") {
            print!("{content}");
            return Ok(());
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("cannot create directory {}", parent.display()))?;
            }
        }
        std::fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn read_conll_file(path: &Path) -> Result<ConllRead> {
    let read = read_conll2000(&read_file(path)?)
        .with_context(|| format!("cannot parse CoNLL file {}", path.display()))?;
    if read.normalized > 0 {
        eprintln!("note: {}: normalized {} I tags to B", path.display(), read.normalized);
    }
    Ok(read)
}

/// Plain text corpus: one whitespace-tokenized sentence per line; blank
/// lines skipped; ids are running indices.
pub fn read_text_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = read_file(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        out.push(Sentence::from_words(out.len().to_string(), &words));
    }
    Ok(out)
}

/// Records an embedding provider in a checkpoint.
pub fn pack_provider(spec: &ProviderSpec, provider: &Provider, c: &mut Container) {
    c.meta.insert("emb_spec".to_string(), spec.to_spec_string());
    if let Provider::Lookup(table) = provider {
        c.tensors.insert("lookup.table".to_string(), table.table.clone());
        c.vocabs.insert("lookup.vocab".to_string(), table.vocab().clone());
    }
}

/// Restores the provider recorded in a checkpoint; `override_spec` replaces
/// the stored spec (needed when a `file` provider moved).
pub fn provider_from_container(c: &Container, override_spec: Option<&str>) -> Result<(ProviderSpec, Provider)> {
    let spec_str = match override_spec {
        Some(s) => s.to_string(),
        None => c
            .meta
            .get("emb_spec")
            .cloned()
            .ok_or_else(|| anyhow::anyhow!("checkpoint does not record an embedding spec; pass --emb"))?,
    };
    let spec = ProviderSpec::parse(&spec_str)?;
    let provider = match spec.kind {
        uchunk_core::embeddings::ProviderKind::Lookup => {
            let table = c
                .tensors
                .get("lookup.table")
                .ok_or_else(|| anyhow::anyhow!("checkpoint lacks the lookup embedding table"))?;
            let vocab = c
                .vocabs
                .get("lookup.vocab")
                .ok_or_else(|| anyhow::anyhow!("checkpoint lacks the lookup vocabulary"))?;
            Provider::Lookup(LookupTable::from_parts(vocab.clone(), table.clone()))
        }
        _ => Provider::build(&spec, &[])?,
    };
    Ok((spec, provider))
}

pub fn load_container(path: &Path) -> Result<Container> {
    Container::from_text(&read_file(path)?)
        .with_context(|| format!("cannot parse checkpoint {}", path.display()))
}

/// `lo:hi:step` grids reused by a couple of subcommands.
pub fn parse_grid(text: &str) -> Result<uchunk_core::baselines::TauGrid> {
    uchunk_core::baselines::TauGrid::parse(text).map_err(|e| usage(e.to_string()))
}

/// Every stochastic subcommand must have a seed, from flag or config.
pub fn require_seed(seed: Option<u64>, ctx: &Ctx, cmd: &str) -> Result<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    if let Some(s) = ctx.config.get_parsed::<u64>("seed")? {
        return Ok(s);
    }
    Err(usage(format!("--seed is required for `{cmd}` (or set `seed =` in --config)")))
}

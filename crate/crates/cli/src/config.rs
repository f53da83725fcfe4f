//! Optional `key = value` configuration files. Explicit flags always win;
//! a subcommand only consults the keys it understands, so one file can
//! carry settings for a whole pipeline.

use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    /// Parses the configured value for `key`, if present.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| anyhow::anyhow!("config key {key}: cannot parse {raw:?}")),
        }
    }

    /// Fills an absent flag from the config file.
    pub fn fill<T: FromStr>(&self, flag: &mut Option<T>, key: &str) -> Result<()> {
        if flag.is_none() {
            *flag = self.get_parsed(key)?;
        }
        Ok(())
    }
}

pub fn load(path: Option<&Path>) -> Result<ConfigMap> {
    let Some(path) = path else {
        return Ok(ConfigMap::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut values = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config file {} line {}: expected `key = value`", path.display(), lineno + 1);
        };
        values.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(ConfigMap { values })
}

//! Flat `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use the long
//! flag names without the leading dashes; `_` and `-` are interchangeable.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "frames",
    "flow",
    "out",
    "gt",
    "p",
    "q",
    "sigma-t",
    "lambda",
    "tol",
    "max-iters",
    "init",
    "seed",
    "tau",
    "cycles",
    "network-cmd",
    "network-timeout",
    "threads",
    "dump-diagnostics",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading --config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in --config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {line_no}: unknown key `{key}`");
            }
            let value = unquote(value.trim()).to_string();
            if values.insert(key.clone(), (value, line_no)).is_some() {
                bail!("line {line_no}: duplicate key `{key}`");
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("line {line}: bad value `{v}` for `{key}`: {e}")),
        }
    }
}

fn unquote(s: &str) -> &str {
    for q in ['"', '\''] {
        if let Some(inner) = s.strip_prefix(q).and_then(|r| r.strip_suffix(q)) {
            return inner;
        }
    }
    s
}

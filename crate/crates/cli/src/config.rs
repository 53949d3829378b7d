//! `key = value` configuration files. Flags given on the command line take
//! precedence over the file, which takes precedence over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub const KEYS: &[&str] = &[
    "m",
    "ref",
    "eps",
    "tau",
    "eps_stop",
    "seed",
    "metric",
    "max_steps",
    "out",
    "format",
    "tau_max",
    "theta",
    "eps_stop_shape",
    "max_shape_steps",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`", i + 1);
            };
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key `{}`", i + 1, k.trim());
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")),
        }
    }

    /// `flag` if set, else the file value.
    pub fn merge<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

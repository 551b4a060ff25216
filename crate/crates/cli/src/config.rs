//! Flat `key = value` experiment configs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

/// Keys that steer execution but not results; they are left out of the hash.
const RUNTIME_KEYS: [&str; 2] = ["workers", "out"];

pub const ENV_SEED: &str = "DEPIN_SEED";
pub const ENV_WORKERS: &str = "DEPIN_WORKERS";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses lines of `key = value`. `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || !k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_') {
                bail!("line {}: invalid key `{k}`", n + 1);
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                bail!("line {}: duplicate key `{k}`", n + 1);
            }
        }
        Ok(Config { entries })
    }

    /// Applies `DEPIN_SEED` and `DEPIN_WORKERS` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        for (var, key) in [(ENV_SEED, "seed"), (ENV_WORKERS, "workers")] {
            if let Ok(v) = std::env::var(var) {
                v.trim().parse::<u64>().with_context(|| format!("{var} must be an integer"))?;
                self.set(key, v.trim());
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Fails on the first key not in `allowed` (runtime keys are always allowed).
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.entries.keys() {
            if !allowed.contains(&k.as_str()) && !RUNTIME_KEYS.contains(&k.as_str()) {
                let mut valid: Vec<&str> = allowed.iter().chain(RUNTIME_KEYS.iter()).copied().collect();
                valid.sort_unstable();
                bail!("unknown key `{k}`; valid keys: {}", valid.join(", "));
            }
        }
        Ok(())
    }

    /// Sorted `key = value` lines without the runtime keys.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .filter(|(k, _)| !RUNTIME_KEYS.contains(&k.as_str()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of `subcommand` and the canonical form.
    pub fn hash(&self, subcommand: &str) -> String {
        let mut h = Sha256::new();
        h.update(subcommand.as_bytes());
        h.update(b"\n");
        h.update(self.canonical().as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse::<V>().map_err(|e| anyhow!("key `{key}`: cannot parse `{v}`: {e}")))
            .transpose()
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V>
    where
        V::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<V>().map_err(|e| anyhow!("key `{key}`: cannot parse `{s}`: {e}")))
                    .collect::<Result<Vec<V>>>()
            })
            .transpose()
    }

    pub fn list_or<V: FromStr>(&self, key: &str, default: Vec<V>) -> Result<Vec<V>>
    where
        V::Err: Display,
    {
        Ok(self.list(key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_canonical() {
        let c = Config::parse("# header\nseed = 3\n l_list = 8, 16 # sizes\n\nworkers=4\n").unwrap();
        assert_eq!(c.canonical(), "l_list = 8, 16\nseed = 3\n");
        assert_eq!(c.list::<i64>("l_list").unwrap(), Some(vec![8, 16]));
        assert_eq!(c.get_or("seed", 0u64).unwrap(), 3);
        let d = Config::parse("l_list = 8, 16\nseed = 3\nworkers = 1").unwrap();
        assert_eq!(c.hash("criterion"), d.hash("criterion"));
        assert_ne!(c.hash("criterion"), c.hash("simulate"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("seed").is_err());
        assert!(Config::parse("seed = 1\nseed = 2").is_err());
        assert!(Config::parse("Seed = 1").is_err());
        let c = Config::parse("sed = 1").unwrap();
        let err = c.check_keys(&["seed", "h"]).unwrap_err().to_string();
        assert!(err.contains("unknown key `sed`") && err.contains("h, out, seed, workers"), "{err}");
        assert!(Config::parse("seed = x").unwrap().get::<u64>("seed").is_err());
    }
}

//! Line-based `key=value` run configuration.
//!
//! A config file holds one `key=value` pair per line; blank lines and lines
//! starting with `#` are skipped, and whitespace around keys and values is
//! trimmed. Keys are checked against the workbench's known-key list when the
//! file is parsed, so a typo fails fast as a usage error rather than being
//! silently ignored. Each subcommand then consumes the keys it understands
//! through the typed getters; keys that are known globally but meaningless to
//! the subcommand at hand are reported by [`ConfigMap::finish`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Every key any subcommand understands. Parsing rejects keys outside this
/// list.
pub const KNOWN_KEYS: &[&str] = &[
    "angle_step",
    "base",
    "batch_size",
    "codebook_size",
    "csv",
    "data",
    "delta",
    "delta_fracs",
    "epochs",
    "gamma",
    "gamma_grid",
    "grid_step",
    "hidden",
    "inner_lr_scale",
    "inner_steps",
    "latent_m",
    "levels",
    "lr",
    "m1",
    "m2",
    "model",
    "n_list",
    "output",
    "pool",
    "predictor",
    "rho",
    "seed",
    "source",
    "stage",
    "temperature",
];

/// Parsed config file with consumption tracking.
#[derive(Debug, Clone)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl ConfigMap {
    /// Parses config text; `origin` names the source in error messages.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{origin}:{}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config(format!(
                    "{origin}:{}: empty key",
                    lineno + 1
                )));
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Usage(format!(
                    "{origin}:{}: unknown config key {key:?}",
                    lineno + 1
                )));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "{origin}:{}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
        }
        Ok(ConfigMap {
            entries,
            consumed: BTreeSet::new(),
        })
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        ConfigMap::parse_str(&text, &path.display().to_string())
    }

    /// Empty config (all getters fall back to defaults).
    pub fn empty() -> Self {
        ConfigMap {
            entries: BTreeMap::new(),
            consumed: BTreeSet::new(),
        }
    }

    // ---- typed getters ----------------------------------------------------

    /// Raw value, marking the key consumed.
    pub fn take(&mut self, key: &str) -> Option<String> {
        let v = self.entries.get(key).cloned();
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    pub fn require(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| Error::Config(format!("missing required config key {key:?}")))
    }

    fn parse_with<T>(key: &str, value: &str) -> Result<T>
    where
        T: std::str::FromStr,
    {
        value.parse().map_err(|_| {
            Error::Config(format!(
                "config key {key:?}: cannot parse value {value:?} as {}",
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn get_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            Some(v) => Self::parse_with(key, &v),
            None => Ok(default),
        }
    }

    pub fn get_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            Some(v) => Self::parse_with(key, &v),
            None => Ok(default),
        }
    }

    pub fn require_usize(&mut self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        Self::parse_with(key, &v)
    }

    pub fn get_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some(v) => Self::parse_with(key, &v),
            None => Ok(default),
        }
    }

    pub fn require_f64(&mut self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        Self::parse_with(key, &v)
    }

    /// Comma-separated list; `default` is returned when the key is absent.
    pub fn get_usize_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.take(key) {
            Some(v) => v
                .split(',')
                .map(|p| Self::parse_with(key, p.trim()))
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    pub fn get_f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take(key) {
            Some(v) => v
                .split(',')
                .map(|p| Self::parse_with(key, p.trim()))
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    /// Fails if any key was never consumed: the key is recognized by the
    /// workbench but not by the subcommand that ran.
    pub fn finish(&self) -> Result<()> {
        let leftover: Vec<&str> = self
            .entries
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .map(|k| k.as_str())
            .collect();
        if leftover.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "config keys not used by this subcommand: {}",
                leftover.join(", ")
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

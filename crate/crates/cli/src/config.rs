//! Flat `key = value` configuration files with `#` comments. One config
//! fully determines a run; every seed is explicit or defaulted to a
//! documented constant.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
}

impl Config {
    pub fn parse_file(path: impl AsRef<Path>) -> Result<Config> {
        let text = std::fs::read_to_string(path.as_ref())
            .with_context(|| format!("cannot read config {}", path.as_ref().display()))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line}: expected 'key = value', got '{stripped}'"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("line {line}: empty key");
            }
            if entries.insert(key.clone(), (value, line)).is_some() {
                bail!("line {line}: duplicate key '{key}'");
            }
        }
        Ok(Config { entries })
    }

    /// Reject keys outside the allowed set, so typos fail loudly.
    pub fn check_known(&self, allowed: &[&str]) -> Result<()> {
        for (key, (_, line)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                bail!("line {line}: unknown key '{key}'");
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn parse_with<T, F: Fn(&str) -> std::result::Result<T, String>>(
        &self,
        key: &str,
        f: F,
    ) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => f(v)
                .map(Some)
                .map_err(|e| anyhow!("line {line}: key '{key}': {e}")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self
            .parse_with(key, |v| v.parse().map_err(|e| format!("{e}")))?
            .unwrap_or(default))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.parse_with(key, |v| v.parse().map_err(|e| format!("{e}")))?
            .ok_or_else(|| anyhow!("missing required key '{key}'"))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self
            .parse_with(key, |v| v.parse().map_err(|e| format!("{e}")))?
            .unwrap_or(default))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self
            .parse_with(key, |v| v.parse().map_err(|e| format!("{e}")))?
            .unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self
            .parse_with(key, |v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(format!("expected true/false, got '{other}'")),
            })?
            .unwrap_or(default))
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    /// Comma-separated f64 list; a single value broadcasts to length `d`.
    pub fn f64_vec_or(&self, key: &str, d: usize, default: f64) -> Result<Vec<f64>> {
        match self.parse_with(key, |v| {
            v.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{e}")))
                .collect::<std::result::Result<Vec<f64>, String>>()
        })? {
            None => Ok(vec![default; d]),
            Some(list) if list.len() == 1 => Ok(vec![list[0]; d]),
            Some(list) if list.len() == d => Ok(list),
            Some(list) => bail!(
                "key '{key}': expected 1 or {d} comma-separated values, got {}",
                list.len()
            ),
        }
    }

    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        Ok(self
            .parse_with(key, |v| {
                v.split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{e}")))
                    .collect::<std::result::Result<Vec<usize>, String>>()
            })?
            .unwrap_or_else(|| default.to_vec()))
    }

    pub fn string_list_or(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.raw(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => v.split(',').map(|t| t.trim().to_string()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let cfg = Config::parse_str(
            "# header\n n = 100 \nbeta = 0.05, 0.05, 5\nvariant = SBV # trailing\n\n",
        )
        .unwrap();
        assert_eq!(cfg.require_usize("n").unwrap(), 100);
        assert_eq!(cfg.f64_vec_or("beta", 3, 1.0).unwrap(), vec![0.05, 0.05, 5.0]);
        assert_eq!(cfg.string_or("variant", "CV"), "SBV");
        assert_eq!(cfg.usize_or("missing", 7).unwrap(), 7);
    }

    #[test]
    fn broadcasts_single_value() {
        let cfg = Config::parse_str("beta = 0.3").unwrap();
        assert_eq!(cfg.f64_vec_or("beta", 4, 1.0).unwrap(), vec![0.3; 4]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse_str("just words").is_err());
        assert!(Config::parse_str("a = 1\na = 2").is_err());
        let cfg = Config::parse_str("n = abc").unwrap();
        let err = cfg.require_usize("n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_keys_are_reported() {
        let cfg = Config::parse_str("n = 5\ntypo_key = 3").unwrap();
        let err = cfg.check_known(&["n"]).unwrap_err().to_string();
        assert!(err.contains("typo_key"));
    }
}

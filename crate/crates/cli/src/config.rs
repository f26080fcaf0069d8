//! Flat key-value experiment configuration.
//!
//! Configs are TOML-syntax files restricted to a single flat table of
//! scalars (`key = value`). Every key must be consumed by the experiment
//! that loads the file; leftovers are reported as errors so that a typo can
//! never silently fall back to a default.

use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key `{0}` has a nested value; only flat scalars are allowed")]
    NotScalar(String),
    #[error("unknown config key(s): {0}")]
    UnknownKeys(String),
    #[error("missing required config key `{0}`")]
    Missing(&'static str),
    #[error("config key `{key}` expects {expected}")]
    BadType { key: String, expected: &'static str },
    #[error("config key `{key}` invalid: {msg}")]
    BadValue { key: String, msg: String },
    #[error("config names experiment `{found}` but the `{running}` command is running")]
    WrongExperiment { found: String, running: String },
}

/// A parsed flat config with consumption tracking.
pub struct Config {
    values: BTreeMap<String, toml::Value>,
    taken: std::collections::BTreeSet<String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Config, ConfigError> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut values = BTreeMap::new();
        for (k, v) in table {
            match v {
                toml::Value::Table(_) | toml::Value::Array(_) => {
                    return Err(ConfigError::NotScalar(k))
                }
                other => {
                    values.insert(k, other);
                }
            }
        }
        Ok(Config {
            values,
            taken: Default::default(),
        })
    }

    /// Canonical echo of every key for the report manifest.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect()
    }

    fn take(&mut self, key: &'static str) -> Option<&toml::Value> {
        if self.values.contains_key(key) {
            self.taken.insert(key.to_string());
            self.values.get(key)
        } else {
            None
        }
    }

    pub fn take_usize(&mut self, key: &'static str) -> Result<usize, ConfigError> {
        self.take_usize_opt(key)?.ok_or(ConfigError::Missing(key))
    }

    pub fn take_usize_opt(&mut self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(ConfigError::BadType {
                key: key.into(),
                expected: "a nonnegative integer",
            }),
        }
    }

    pub fn take_usize_or(
        &mut self,
        key: &'static str,
        default: usize,
    ) -> Result<usize, ConfigError> {
        Ok(self.take_usize_opt(key)?.unwrap_or(default))
    }

    pub fn take_u64_opt(&mut self, key: &'static str) -> Result<Option<u64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(ConfigError::BadType {
                key: key.into(),
                expected: "a nonnegative integer",
            }),
        }
    }

    pub fn take_f64(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        self.take_f64_opt(key)?.ok_or(ConfigError::Missing(key))
    }

    pub fn take_f64_opt(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(ConfigError::BadType {
                key: key.into(),
                expected: "a number",
            }),
        }
    }

    pub fn take_f64_or(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.take_f64_opt(key)?.unwrap_or(default))
    }

    pub fn take_bool_or(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(ConfigError::BadType {
                key: key.into(),
                expected: "a boolean",
            }),
        }
    }

    pub fn take_string_opt(&mut self, key: &'static str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(ConfigError::BadType {
                key: key.into(),
                expected: "a string",
            }),
        }
    }

    pub fn take_string_or(
        &mut self,
        key: &'static str,
        default: &str,
    ) -> Result<String, ConfigError> {
        Ok(self
            .take_string_opt(key)?
            .unwrap_or_else(|| default.to_string()))
    }

    /// Consumes the bookkeeping keys shared by every experiment: an optional
    /// `experiment` name (must match the running command), `seed`, and
    /// `out`. Returns `(seed, out)` if present.
    pub fn take_common(
        &mut self,
        command: &str,
    ) -> Result<(Option<u64>, Option<String>), ConfigError> {
        if let Some(name) = self.take_string_opt("experiment")? {
            if name != command {
                return Err(ConfigError::WrongExperiment {
                    found: name,
                    running: command.to_string(),
                });
            }
        }
        let seed = self.take_u64_opt("seed")?;
        let out = self.take_string_opt("out")?;
        Ok((seed, out))
    }

    /// Fails if any key was never consumed.
    pub fn finish(self) -> Result<(), ConfigError> {
        let leftover: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !self.taken.contains(*k))
            .collect();
        if leftover.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::UnknownKeys(
                leftover
                    .iter()
                    .map(|s| format!("`{s}`"))
                    .collect::<Vec<_>>()
                    .join(", "),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_tracks_consumption() {
        let mut c = Config::from_text("w = 8\nl = 4\neta = 0.1\nname = \"x\"\n").unwrap();
        assert_eq!(c.take_usize("w").unwrap(), 8);
        assert_eq!(c.take_f64("eta").unwrap(), 0.1);
        assert_eq!(c.take_usize("l").unwrap(), 4);
        // `name` never consumed -> error.
        let err = c.finish().unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKeys(ref s) if s.contains("name")));
    }

    #[test]
    fn rejects_nested_values_and_bad_types() {
        assert!(matches!(
            Config::from_text("a = { b = 1 }\n"),
            Err(ConfigError::NotScalar(_))
        ));
        let mut c = Config::from_text("w = \"eight\"\n").unwrap();
        assert!(matches!(
            c.take_usize("w"),
            Err(ConfigError::BadType { .. })
        ));
        let mut c2 = Config::from_text("w = -3\n").unwrap();
        assert!(c2.take_usize("w").is_err());
    }

    #[test]
    fn integers_promote_to_floats() {
        let mut c = Config::from_text("t = 1\n").unwrap();
        assert_eq!(c.take_f64("t").unwrap(), 1.0);
        c.finish().unwrap();
    }

    #[test]
    fn common_keys() {
        let mut c =
            Config::from_text("experiment = \"qdiff\"\nseed = 7\nout = \"runs/a\"\n").unwrap();
        let (seed, out) = c.take_common("qdiff").unwrap();
        assert_eq!(seed, Some(7));
        assert_eq!(out.as_deref(), Some("runs/a"));
        c.finish().unwrap();

        let mut c2 = Config::from_text("experiment = \"deloc\"\n").unwrap();
        assert!(matches!(
            c2.take_common("qdiff"),
            Err(ConfigError::WrongExperiment { .. })
        ));
    }
}

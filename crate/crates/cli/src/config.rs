//! Flat `key = value` config files. Keys are the long option names of the
//! subcommand (`nsim`, `grid-size`, ...); list values are comma separated.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected `key = value`", i + 1)));
            };
            let key = k.trim().trim_start_matches("--").to_string();
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Rejects keys outside `allowed`, so typos do not pass silently.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse()
                            .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{s}`")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Flag value, else config value, else `default`.
pub fn pick<T: FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T, CliError> {
    Ok(match flag {
        Some(v) => v,
        None => file.get(key)?.unwrap_or(default),
    })
}

/// List flag (empty when absent), else config value, else `default`.
pub fn pick_list<T: FromStr>(flag: Vec<T>, file: &ConfigFile, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
    if !flag.is_empty() {
        return Ok(flag);
    }
    Ok(file.get_list(key)?.unwrap_or(default))
}

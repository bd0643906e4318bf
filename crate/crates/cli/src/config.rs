//! Effective run configuration: defaults, then a key=value file, then
//! `ENGAGE_*` environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::UsageError;

pub const ENV_PREFIX: &str = "ENGAGE_";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Parses `key = value` lines. Blank lines and `#` comments are ignored.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key = value", i + 1)))?;
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Merges the layers for the keys in `defaults`; keys a layer does not
    /// know are ignored so one file can serve every subcommand.
    pub fn resolve(
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        flags: &[(&str, Option<String>)],
    ) -> Result<Self, UsageError> {
        let from_file = match file {
            Some(p) => parse_file(
                &std::fs::read_to_string(p).map_err(|e| UsageError(format!("config file {}: {e}", p.display())))?,
            )?,
            None => BTreeMap::new(),
        };
        let mut values = BTreeMap::new();
        for &(key, default) in defaults {
            let mut v = default.to_string();
            if let Some(f) = from_file.get(key) {
                v.clone_from(f);
            }
            if let Some(e) = env(&format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())) {
                v = e;
            }
            if let Some(Some(flag)) = flags.iter().find(|(k, _)| *k == key).map(|(_, v)| v) {
                v.clone_from(flag);
            }
            values.insert(key.to_string(), v);
        }
        Ok(Self { values })
    }

    pub fn from_process(
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        flags: &[(&str, Option<String>)],
    ) -> Result<Self, UsageError> {
        Self::resolve(defaults, file, |k| std::env::var(k).ok(), flags)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map_or("", String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<T, UsageError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e| UsageError(format!("invalid value `{}` for {key}: {e}", self.raw(key))))
    }

    pub fn flag(&self, key: &str) -> Result<bool, UsageError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => Err(UsageError(format!("invalid boolean `{other}` for {key}"))),
        }
    }

    /// Comma-separated reals; each item may be a fraction such as `1/3`.
    pub fn reals(&self, key: &str) -> Result<Vec<f64>, UsageError> {
        self.raw(key)
            .split(',')
            .map(|item| {
                let item = item.trim();
                let parsed = match item.split_once('/') {
                    Some((n, d)) => n
                        .trim()
                        .parse::<f64>()
                        .and_then(|n| d.trim().parse::<f64>().map(|d| n / d)),
                    None => item.parse(),
                };
                parsed.map_err(|_| UsageError(format!("invalid number `{item}` in {key}")))
            })
            .collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }
}

//! Flat `key = value` text format used for study specs and run configs.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}", lineno + 1), format!("expected key = value, got '{line}'")))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(format!("line {}", lineno + 1), "empty key"));
            }
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(Error::parse(key, "duplicate key"));
            }
            entries.push((key, value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::parse(key, format!("'{v}': {e}"))))
            .transpose()
    }

    /// Comma-separated list; empty entries are dropped.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
    }
}

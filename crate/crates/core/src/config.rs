//! Flat `key = value` configuration text. `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "<config>".into(),
                line: n + 1,
                message: format!("expected key=value, found {line:?}"),
            })?;
            entries.insert(key.trim().to_owned(), value.trim().to_owned());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Overwrites `slot` when `key` is present.
    pub fn read_into<T>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(raw) = self.get(key) {
            *slot = raw
                .parse()
                .map_err(|e| Error::invalid(format!("config key {key}: {e}")))?;
        }
        Ok(())
    }

    /// Fails on keys outside `known`, catching typos.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::invalid(format!("unknown config key {k}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KeyValues::parse("# header\nmargin = 0.2\n\nepochs=3 # trailing\n").unwrap();
        let mut margin = 0.1f64;
        let mut epochs = 10usize;
        kv.read_into("margin", &mut margin).unwrap();
        kv.read_into("epochs", &mut epochs).unwrap();
        assert_eq!((margin, epochs), (0.2, 3));
        assert!(kv.reject_unknown(&["margin"]).is_err());
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(kv.read_into("margin", &mut 0u32).is_err());
    }
}

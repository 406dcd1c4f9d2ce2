//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may carry a dotted
//! section prefix (`world.visibility`).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    origin: String,
}

impl KeyValues {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("{origin}:{}", i + 1), "expected `key = value`"))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(format!("{origin}:{}", i + 1), "empty key"));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(KeyValues {
            entries,
            origin: origin.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact {
                what: "config file".into(),
                path: path.to_path_buf(),
            },
            _ => Error::Io(e),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Reads `key`, falling back to `section.key` when a section is given.
    pub fn get<T: FromStr>(&self, section: Option<&str>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let qualified = section.map(|s| format!("{s}.{key}"));
        let raw = qualified.as_deref().and_then(|q| self.raw(q)).or_else(|| self.raw(key));
        match raw {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::parse(self.origin.clone(), format!("key {key}: {v:?}: {e}"))),
        }
    }

    /// Overwrites `*slot` when `key` is present.
    pub fn read_into<T: FromStr>(&self, section: Option<&str>, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(section, key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on keys outside `allowed`, ignoring keys that belong to other sections.
    pub fn reject_unknown(&self, section: &str, allowed: &[&str]) -> Result<()> {
        let prefix = format!("{section}.");
        for k in self.keys() {
            if let Some(rest) = k.strip_prefix(&prefix) {
                if !allowed.contains(&rest) {
                    return Err(Error::validation(format!("{}: unknown key {k}", self.origin)));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_sections() {
        let kv = KeyValues::parse("# comment\nseed = 7\nworld.visibility = 0.5\n\nvisibility=0.9\n", "t").unwrap();
        assert_eq!(kv.get::<u64>(None, "seed").unwrap(), Some(7));
        assert_eq!(kv.get::<f64>(Some("world"), "visibility").unwrap(), Some(0.5));
        assert_eq!(kv.get::<f64>(None, "visibility").unwrap(), Some(0.9));
        assert_eq!(kv.get::<f64>(None, "missing").unwrap(), None);
    }

    #[test]
    fn bad_line_and_value() {
        assert!(KeyValues::parse("no equals sign", "t").is_err());
        let kv = KeyValues::parse("x = abc", "t").unwrap();
        assert!(kv.get::<f64>(None, "x").is_err());
    }
}

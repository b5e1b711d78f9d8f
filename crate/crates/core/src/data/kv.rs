//! Flat `key = value` configuration text.
//!
//! Blank lines and lines starting with `#` are ignored; a trailing `# ...`
//! after a value is a comment. Keys are unique. Values are read with the
//! typed `take_*` accessors, and [`KvConfig::finish`] rejects any key that
//! was never read, so typos surface as errors instead of silently using
//! defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KvConfig {
    source: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(source, "line", Some(line_no), format!("expected key = value, got {line:?}"))
            })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                return Err(Error::parse(source, "key", Some(line_no), format!("invalid key {key:?}")));
            }
            if entries
                .insert(key.to_string(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::parse(source, key, Some(line_no), "duplicate key"));
            }
        }
        Ok(Self {
            source: source.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// Parses and removes `key`; `Ok(None)` when absent.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| {
                Error::parse(&self.source, key, Some(line), format!("cannot parse {v:?}: {e}"))
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Accepts `true/false`, `yes/no`, `on/off` and `1/0`.
    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(Some(true)),
                "false" | "no" | "off" | "0" => Ok(Some(false)),
                _ => Err(Error::parse(&self.source, key, Some(line), format!("not a boolean: {v:?}"))),
            },
        }
    }

    /// Comma- or whitespace-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|e| {
                        Error::parse(&self.source, key, Some(line), format!("cannot parse {s:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Removes every `prefix.key` entry and returns them as their own
    /// config with the prefix stripped.
    pub fn take_prefixed(&mut self, prefix: &str) -> KvConfig {
        let dotted = format!("{prefix}.");
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(&dotted)).cloned().collect();
        let mut entries = BTreeMap::new();
        for k in keys {
            let v = self.entries.remove(&k).expect("listed key");
            entries.insert(k[dotted.len()..].to_string(), v);
        }
        KvConfig {
            source: self.source.clone(),
            entries,
        }
    }

    /// Errors if any key was never taken.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::parse(self.source, key, Some(line), "unknown key")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_access_and_comments() {
        let mut kv = KvConfig::parse("# header\nlr = 2e-4  # adam\n\nuse_lstm = yes\nsizes = 1, 2 3\nname = run a\n", "t").unwrap();
        assert_eq!(kv.take::<f64>("lr").unwrap(), Some(2e-4));
        assert_eq!(kv.take_bool("use_lstm").unwrap(), Some(true));
        assert_eq!(kv.take_list::<usize>("sizes").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(kv.take_str("name").as_deref(), Some("run a"));
        assert_eq!(kv.take::<u64>("absent").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |r: Result<KvConfig>| match r {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of(KvConfig::parse("a = 1\nnot a pair\n", "t")), Some(2));
        assert_eq!(line_of(KvConfig::parse("a = 1\n\na = 2\n", "t")), Some(3));
        let mut kv = KvConfig::parse("\nseed = x\n", "t").unwrap();
        assert!(matches!(kv.take::<u64>("seed"), Err(Error::Parse { line: Some(2), .. })));
        let mut kv = KvConfig::parse("a.x = 1\nb = 2\n", "t").unwrap();
        let mut sub = kv.take_prefixed("a");
        assert_eq!(sub.take::<u32>("x").unwrap(), Some(1));
        assert!(kv.contains("b") && !kv.contains("a.x"));
        let kv = KvConfig::parse("typo = 1\n", "t").unwrap();
        assert!(matches!(kv.finish(), Err(Error::Parse { .. })));
    }
}

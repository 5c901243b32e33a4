//! Minimal `key=value` text format shared by config, mapping, metadata and
//! report files. `#` starts a comment line; blank lines are ignored; the
//! first `=` separates key from value and both sides are trimmed.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {}: expected key=value, got `{line}`", idx + 1))
        })?;
        out.push(Entry {
            line: idx + 1,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

pub(crate) fn parse_num<T: std::str::FromStr>(entry: &Entry) -> Result<T> {
    entry.value.parse().map_err(|_| {
        Error::InvalidConfig(format!(
            "line {}: `{}` is not a valid value for `{}`",
            entry.line, entry.value, entry.key
        ))
    })
}

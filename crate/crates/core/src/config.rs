//! Line-based `key = value` files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear once.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str, file: &Path) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((k, v)) = trimmed.split_once('=') else {
            return Err(config_error(file, line, format!("expected `key = value`, found `{trimmed}`")));
        };
        let key = k.trim();
        if key.is_empty() {
            return Err(config_error(file, line, "empty key".into()));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(config_error(
                file,
                line,
                format!("duplicate key `{key}` (first set on line {})", prev.line),
            ));
        }
        out.push(Entry {
            key: key.to_string(),
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, path)
}

pub fn config_error(file: &Path, line: usize, msg: String) -> Error {
    Error::Config {
        file: PathBuf::from(file),
        line,
        msg,
    }
}

/// Parses a value, reporting failures against the key.
pub fn value<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("invalid value `{v}` for `{key}`"))
}

pub fn list(key: &str, v: &str) -> std::result::Result<Vec<usize>, String> {
    v.split(',').map(|s| value(key, s.trim())).collect()
}

pub fn format_list(v: &[usize]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_with_lines() {
        let text = "# comment\nmode = iwgan\n\n  res=8  \nlist = 1, 2,3\n";
        let e = parse(text, Path::new("run.cfg")).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!((e[1].key.as_str(), e[1].value.as_str(), e[1].line), ("res", "8", 4));
        assert_eq!(list("list", &e[2].value).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn errors_name_file_and_line() {
        let err = parse("a = 1\nnonsense\n", Path::new("x.cfg")).unwrap_err();
        assert_eq!(err.to_string(), "x.cfg:2: expected `key = value`, found `nonsense`");
        let err = parse("a = 1\na = 2\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().starts_with("x.cfg:2: duplicate key"));
    }

    #[test]
    fn value_errors() {
        assert!(value::<usize>("batch", "two").unwrap_err().contains("batch"));
        assert!(list("c", "1,,2").is_err());
        assert_eq!(format_list(&[4, 2, 1]), "4,2,1");
    }
}

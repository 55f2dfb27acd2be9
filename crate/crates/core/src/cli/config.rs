//! Flat `key = value` run files. `#` starts a comment; keys may use `-` or `_`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub path: PathBuf,
    pub line: usize,
}

impl ConfigEntry {
    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    pub fn parse<T: FromStr>(&self) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.value
            .parse()
            .map_err(|e: T::Err| self.error(format!("bad value '{}' for {}: {e}", self.value, self.key)))
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<Vec<ConfigEntry>> {
    let mut out: Vec<ConfigEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
        let key = k.trim().replace('-', "_");
        let value = v.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(err(format!("empty key or value in '{line}'")));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(err(format!("duplicate key '{key}' (first set on line {})", prev.line)));
        }
        out.push(ConfigEntry {
            key,
            value,
            path: path.to_path_buf(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<Vec<ConfigEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Comma-separated list of positive integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UsizeList(pub Vec<usize>);

impl FromStr for UsizeList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.is_empty() || v.contains(&0) {
            return Err(format!("'{s}' must list positive integers"));
        }
        Ok(UsizeList(v))
    }
}

/// A positive limit, or `off` to disable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Limit(pub Option<f64>);

impl FromStr for Limit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "off" | "none" => Ok(Limit(None)),
            v => {
                let x: f64 = v.parse().map_err(|e| format!("'{v}': {e}"))?;
                if x > 0.0 {
                    Ok(Limit(Some(x)))
                } else {
                    Err(format!("'{v}' must be positive or 'off'"))
                }
            }
        }
    }
}

/// Declares a clap argument group whose fields are all optional so that
/// flags override run-file values, which override defaults.
macro_rules! options {
    ($(#[$meta:meta])* $name:ident { $($(#[doc = $doc:literal])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(clap::Args, Clone, Debug, Default)]
        pub struct $name {
            $(
                $(#[doc = $doc])*
                #[arg(long)]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Fills unset fields from a run-file entry; `false` if the key is not ours.
            pub fn absorb(&mut self, entry: &$crate::cli::config::ConfigEntry) -> $crate::error::Result<bool> {
                match entry.key.as_str() {
                    $(
                        stringify!($field) => {
                            if self.$field.is_none() {
                                self.$field = Some(entry.parse::<$ty>()?);
                            }
                            Ok(true)
                        }
                    )*
                    _ => Ok(false),
                }
            }
        }
    };
}

pub(crate) use options;

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("run.cfg")
    }

    #[test]
    fn parses_keys_values_and_comments() {
        let text = "# header\nsteps = 20000\n\ncritic-hidden=64,64  # trailing\n";
        let e = parse_config(text, p()).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].key.as_str(), e[0].value.as_str(), e[0].line), ("steps", "20000", 2));
        assert_eq!(e[1].key, "critic_hidden");
        assert_eq!(e[1].parse::<UsizeList>().unwrap(), UsizeList(vec![64, 64]));
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["steps 10", "=3", "k=", "k=1\nk=2"] {
            assert!(matches!(parse_config(bad, p()), Err(Error::Parse { .. })), "{bad}");
        }
        match parse_config("a=1\nb=2\nnonsense\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn value_types() {
        assert!("1,0".parse::<UsizeList>().is_err());
        assert!("a".parse::<UsizeList>().is_err());
        assert_eq!("off".parse::<Limit>().unwrap(), Limit(None));
        assert_eq!("1e8".parse::<Limit>().unwrap(), Limit(Some(1e8)));
        assert!("-1".parse::<Limit>().is_err());
        let e = &parse_config("steps = ten", p()).unwrap()[0];
        assert!(matches!(e.parse::<usize>(), Err(Error::Parse { line: 1, .. })));
    }
}

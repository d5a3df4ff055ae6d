//! Sectioned `key = value` experiment files.
//!
//! ```text
//! # comment (also ';')
//! [environment]
//! cookies = 0.75 0.75 0.75 0.75 0.75
//!
//! [run]
//! seed = 20240601
//! ```
//!
//! Section and key names are `[A-Za-z0-9_-]+`. Values run to the end of the
//! line; a `#` after whitespace starts a trailing comment. Lists are
//! separated by whitespace or commas. A key may appear once per section,
//! except `component` in `[environment]`, which repeats once per mixture
//! component as `component = weight : p1 p2 ... pM`. The file is hashed
//! byte for byte, comments included.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::env::{CookieEnvironmentSpec, CookieLaw, CookieVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    text: String,
    hash: String,
    sections: BTreeMap<String, BTreeMap<String, Vec<Entry>>>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn strip_comment(s: &str) -> &str {
    let bytes = s.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &s[..i];
        }
    }
    s
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Config { line, msg };
        let mut sections: BTreeMap<String, BTreeMap<String, Vec<Entry>>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, format!("unterminated section header {t:?}")))?
                    .trim();
                if !valid_name(name) {
                    return Err(err(line, format!("bad section name {name:?}")));
                }
                if sections.contains_key(name) {
                    return Err(err(line, format!("section [{name}] appears twice")));
                }
                sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected key = value, got {t:?}")))?;
            let key = k.trim();
            if !valid_name(key) {
                return Err(err(line, format!("bad key {key:?}")));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| err(line, format!("key {key:?} outside any section")))?;
            let entries = sections.get_mut(section).unwrap().entry(key.to_string()).or_default();
            let repeatable = section == "environment" && key == "component";
            if !entries.is_empty() && !repeatable {
                return Err(err(line, format!("duplicate key {key:?} in [{section}]")));
            }
            entries.push(Entry {
                value: strip_comment(v).trim().to_string(),
                line,
            });
        }
        Ok(Self {
            text: text.to_string(),
            hash: hex(&Sha256::digest(text.as_bytes())),
            sections,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Full SHA-256 of the file text, hex encoded.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// First 16 hex digits of [`Config::hash`], the CSV `config_hash` value.
    pub fn short_hash(&self) -> &str {
        &self.hash[..16]
    }

    pub fn sections(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    /// Keys of `section` with the line of their first occurrence.
    pub fn keys(&self, section: &str) -> Vec<(&str, usize)> {
        self.sections
            .get(section)
            .map(|s| s.iter().map(|(k, e)| (k.as_str(), e[0].line)).collect())
            .unwrap_or_default()
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section)?.get(key)?.first()
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|x: T::Err| Error::Config {
                line: e.line,
                msg: format!("[{section}] {key}: {x}"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => parse_list(&e.value, e.line).map(Some),
        }
    }

    /// The `[environment]` block as a validated spec.
    pub fn environment(&self) -> Result<CookieEnvironmentSpec> {
        let sec = self.sections.get("environment").ok_or(Error::Config {
            line: 0,
            msg: "missing [environment] section".into(),
        })?;
        for (k, entries) in sec {
            if !["cookies", "component", "ellipticity"].contains(&k.as_str()) {
                return Err(Error::Config {
                    line: entries[0].line,
                    msg: format!("unknown key {k:?} in [environment]"),
                });
            }
        }
        let elliptic = self.get_or("environment", "ellipticity", true)?;
        let parts: Vec<(f64, Vec<f64>)> = match (sec.get("cookies"), sec.get("component")) {
            (Some(c), None) => vec![(1.0, parse_list(&c[0].value, c[0].line)?)],
            (None, Some(list)) => list
                .iter()
                .map(|e| {
                    let (w, ps) = e.value.split_once(':').ok_or(Error::Config {
                        line: e.line,
                        msg: "component needs `weight : p1 ... pM`".into(),
                    })?;
                    let w: f64 = w.trim().parse().map_err(|x| Error::Config {
                        line: e.line,
                        msg: format!("component weight: {x}"),
                    })?;
                    Ok((w, parse_list(ps, e.line)?))
                })
                .collect::<Result<_>>()?,
            _ => {
                return Err(Error::Config {
                    line: 0,
                    msg: "[environment] needs either `cookies` or `component` lines".into(),
                })
            }
        };
        let m = parts[0].1.len();
        let deterministic = sec.contains_key("cookies");
        let parts = parts
            .into_iter()
            .map(|(w, v)| CookieVector::new(v).map(|v| (w, v)))
            .collect::<Result<Vec<_>>>()?;
        let law = if deterministic {
            CookieLaw::Deterministic(parts.into_iter().next().unwrap().1)
        } else {
            CookieLaw::Mixture(parts)
        };
        if elliptic {
            CookieEnvironmentSpec::new(m, law)
        } else {
            CookieEnvironmentSpec::without_ellipticity(m, law)
        }
    }
}

fn parse_list<T: FromStr>(s: &str, line: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|x: T::Err| Error::Config {
                line,
                msg: format!("list item {t:?}: {x}"),
            })
        })
        .collect()
}

/// Stable digest of an environment: `M`, then each component's weight and
/// cookie probabilities as IEEE-754 bit patterns.
pub fn env_hash(spec: &CookieEnvironmentSpec) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"erw-env-v1");
    h.update((spec.m() as u64).to_le_bytes());
    for (w, v) in spec.weights().iter().zip(spec.components()) {
        h.update(w.to_bits().to_le_bytes());
        for p in v.probs() {
            h.update(p.to_bits().to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn env_hash_hex(spec: &CookieEnvironmentSpec) -> String {
    hex(&env_hash(spec))
}

//! File formats shared by the library and the command-line tools.
//!
//! Signals are flat little-endian `f64` files with a JSON sidecar holding
//! `{shape, channels}`; the sidecar sits next to the binary with the
//! extension replaced by `.json`. Configs are flat `key = value` text with
//! `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{invalid, MuseError, Result};
use crate::tensor::{Signal, SignalLayout};

/// Format like C's `%.9g`: 9 significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-5, 1e9)`.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Path of the JSON sidecar belonging to a binary file.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn write_f64s(path: &Path, data: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| MuseError::io(path, e))
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| MuseError::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(MuseError::format(path, "length is not a multiple of 8 bytes"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| MuseError::format(path, e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| MuseError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| MuseError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| MuseError::format(path, e.to_string()))
}

/// Write `signal` to `path` plus its sidecar.
pub fn save_signal(signal: &Signal, path: &Path) -> Result<()> {
    write_f64s(path, signal.as_slice())?;
    write_json(&sidecar_path(path), &signal.layout())
}

pub fn load_signal(path: &Path) -> Result<Signal> {
    let layout: SignalLayout = read_json(&sidecar_path(path))?;
    let data = read_f64s(path)?;
    Signal::new(data, layout.shape, layout.channels)
        .map_err(|e| MuseError::format(path, e.to_string()))
}

/// Flat `key = value` configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    entries: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!("line {}: expected key = value", n + 1));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return invalid(format!("line {}: empty key", n + 1));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return invalid(format!("line {}: duplicate key `{k}`", n + 1));
            }
        }
        Ok(Self {
            entries,
            source: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MuseError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// Directory of the file this config was loaded from.
    pub fn base_dir(&self) -> Option<&Path> {
        self.source.as_deref().and_then(Path::parent)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| MuseError::InvalidArgument(format!("missing required key `{key}`")))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    MuseError::InvalidArgument(format!("key `{key}`: cannot parse `{v}`"))
                })
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?;
        Ok(self.parse_opt(key)?.expect("present"))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse().map_err(|_| {
                            MuseError::InvalidArgument(format!("key `{key}`: cannot parse `{s}`"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    /// Resolve a path value relative to the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            match self.base_dir() {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            }
        })
    }

    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => invalid(format!("unknown key `{k}`")),
            None => Ok(()),
        }
    }

    /// Canonical `key=value` lines, sorted by key. Used for config hashing.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig(123456789.0), "123456789");
        assert_eq!(fmt_sig(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_sig(1.5e-7), "1.5e-07");
        assert_eq!(fmt_sig(0.0001), "0.0001");
        assert_eq!(fmt_sig(12.5), "12.5");
        assert_eq!(fmt_sig(f64::NAN), "nan");
    }

    #[test]
    fn formatted_values_parse_back_closely() {
        for v in [std::f64::consts::PI, -1e-12, 6.02214076e23, 0.1 + 0.2] {
            let back: f64 = fmt_sig(v).parse().unwrap();
            assert!((back - v).abs() <= 1e-8 * v.abs());
        }
    }

    #[test]
    fn signal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let s = Signal::new(vec![1.0, -0.5, 3.25, 1e-300], vec![2], 2).unwrap();
        save_signal(&s, &path).unwrap();
        assert!(dir.path().join("x.json").exists());
        assert_eq!(load_signal(&path).unwrap(), s);
    }

    #[test]
    fn config_parsing() {
        let cfg = KeyValueConfig::parse("# comment\nsigma = 0.5\n\nseed=3 # trailing\nlist = 1, 2,3\n")
            .unwrap();
        assert_eq!(cfg.parse_required::<f64>("sigma").unwrap(), 0.5);
        assert_eq!(cfg.parse_or("epochs", 7usize).unwrap(), 7);
        assert_eq!(cfg.list::<u32>("list").unwrap().unwrap(), vec![1, 2, 3]);
        assert!(cfg.require("missing").unwrap_err().to_string().contains("missing"));
        assert!(cfg.reject_unknown(&["sigma", "seed"]).is_err());
        assert!(KeyValueConfig::parse("a=1\na=2").is_err());
        assert!(KeyValueConfig::parse("novalue").is_err());
        assert!(cfg.parse_opt::<f64>("list").is_err());
    }
}

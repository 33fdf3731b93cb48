//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment. Numeric values may carry a
//! unit suffix (`0.5 um`, `100 ms`, `79.4 um^2/s`); bare numbers are read in
//! the default unit of the key (µm, s, µm²/s).

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Physical dimension of a numeric key, used to convert unit suffixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Micrometres.
    Length,
    /// Seconds.
    Time,
    /// µm²/s.
    Diffusivity,
    /// Dimensionless.
    Scalar,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed key/value pairs. Keys are consumed by the components that own
/// them; anything left over can be reported with [`KeyValues::finish`].
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<KeyValues> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(Error::ConfigSyntax {
                    line,
                    message: "empty key or value".into(),
                });
            }
            let previous = entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
            if let Some(prev) = previous {
                return Err(Error::ConfigSyntax {
                    line,
                    message: format!("duplicate key `{key}` (first set on line {})", prev.line),
                });
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn from_file(path: &Path) -> Result<KeyValues> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KeyValues::parse(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes `key` and returns its raw string value.
    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|e| e.value)
    }

    /// Removes `key` and parses it as a quantity of the given dimension,
    /// converted to the default unit.
    pub fn take_f64(&mut self, key: &str, dim: Dimension) -> Result<Option<f64>> {
        let Some(entry) = self.entries.remove(key) else {
            return Ok(None);
        };
        parse_quantity(&entry.value, dim)
            .map(Some)
            .map_err(|message| Error::ConfigSyntax {
                line: entry.line,
                message: format!("`{key}`: {message}"),
            })
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        let Some(entry) = self.entries.remove(key) else {
            return Ok(None);
        };
        let cleaned = entry.value.replace('_', "");
        // Allow `1e5` style integers.
        let parsed = cleaned.parse::<u64>().ok().or_else(|| {
            cleaned
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v < u64::MAX as f64)
                .map(|v| v as u64)
        });
        parsed.map(Some).ok_or_else(|| Error::ConfigSyntax {
            line: entry.line,
            message: format!("`{key}`: expected a non-negative integer, got `{}`", entry.value),
        })
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, entry)) => Err(Error::ConfigSyntax {
                line: entry.line,
                message: format!("unknown key `{key}`"),
            }),
        }
    }
}

fn parse_quantity(text: &str, dim: Dimension) -> std::result::Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && i > 0 && looks_like_exponent(&text[i..])))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse number `{number}`"))?;
    let unit: String = unit.chars().filter(|c| !c.is_whitespace()).collect();
    let scale = unit_scale(&unit, dim).ok_or_else(|| format!("unit `{unit}` not valid here"))?;
    Ok(value * scale)
}

fn looks_like_exponent(rest: &str) -> bool {
    let mut chars = rest.chars().skip(1);
    match chars.next() {
        Some(c) if c.is_ascii_digit() => true,
        Some('+') | Some('-') => chars.next().is_some_and(|c| c.is_ascii_digit()),
        _ => false,
    }
}

fn unit_scale(unit: &str, dim: Dimension) -> Option<f64> {
    if unit.is_empty() {
        return Some(1.0);
    }
    match dim {
        Dimension::Length => match unit {
            "um" | "µm" | "μm" => Some(1.0),
            "nm" => Some(1e-3),
            "mm" => Some(1e3),
            "m" => Some(1e6),
            _ => None,
        },
        Dimension::Time => match unit {
            "s" => Some(1.0),
            "ms" => Some(1e-3),
            "us" | "µs" | "μs" => Some(1e-6),
            _ => None,
        },
        Dimension::Diffusivity => match unit {
            "um^2/s" | "µm^2/s" | "μm^2/s" | "µm²/s" | "μm²/s" | "um2/s" => Some(1.0),
            "m^2/s" | "m2/s" => Some(1e12),
            _ => None,
        },
        Dimension::Scalar => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units_and_comments() {
        let mut kv = KeyValues::parse(
            "# geometry\nr_tx = 0.5 um\nr_rx=5000nm # inline\nD = 79.4 µm²/s\ndt_sim = 0.1 ms\nT = 5\nn = 1e5\n",
        )
        .unwrap();
        assert_eq!(kv.take_f64("r_tx", Dimension::Length).unwrap(), Some(0.5));
        assert_eq!(kv.take_f64("r_rx", Dimension::Length).unwrap(), Some(5.0));
        assert_eq!(kv.take_f64("D", Dimension::Diffusivity).unwrap(), Some(79.4));
        let dt = kv.take_f64("dt_sim", Dimension::Time).unwrap().unwrap();
        assert!((dt - 1e-4).abs() < 1e-18);
        assert_eq!(kv.take_f64("T", Dimension::Time).unwrap(), Some(5.0));
        assert_eq!(kv.take_u64("n").unwrap(), Some(100_000));
        assert_eq!(kv.take_f64("missing", Dimension::Time).unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn exponent_numbers_are_not_units() {
        assert_eq!(parse_quantity("1e-4", Dimension::Time).unwrap(), 1e-4);
        assert_eq!(parse_quantity("2.5E+1 s", Dimension::Time).unwrap(), 25.0);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            KeyValues::parse("no equals sign"),
            Err(Error::ConfigSyntax { line: 1, .. })
        ));
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
        let mut kv = KeyValues::parse("r = 3 s").unwrap();
        assert!(kv.take_f64("r", Dimension::Length).is_err());
        let kv = KeyValues::parse("\n\nstray = 1").unwrap();
        assert!(matches!(kv.finish(), Err(Error::ConfigSyntax { line: 3, .. })));
    }
}

//! Line-oriented map files:
//!
//! ```text
//! # comment
//! h = exp(i/(1-z))
//! g = 0
//! z0 = 0
//! singularities = 1+0i, -1+0i
//! ```

use std::path::Path;

use num_complex::Complex64;

use super::HarmonicMap;
use crate::error::{Error, Result};
use crate::exprparse::parse;

/// Raw contents of a map file before the map is assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub h: String,
    pub g: String,
    pub z0: Complex64,
    pub singularities: Vec<Complex64>,
}

impl MapFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut h = None;
        let mut g = None;
        let mut z0 = None;
        let mut singularities = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::MapFile(format!(
                    "line {}: expected `key = value`",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            let slot_taken = match key {
                "h" => h.replace(value.to_string()).is_some(),
                "g" => g.replace(value.to_string()).is_some(),
                "z0" => z0.replace(parse_complex_literal(value)?).is_some(),
                "singularities" => {
                    let pts = value
                        .split(',')
                        .map(|s| parse_complex_literal(s.trim()))
                        .collect::<Result<Vec<_>>>()?;
                    singularities.replace(pts).is_some()
                }
                other => {
                    return Err(Error::MapFile(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            };
            if slot_taken {
                return Err(Error::MapFile(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(Self {
            h: h.ok_or_else(|| Error::MapFile("missing required key `h`".into()))?,
            g: g.ok_or_else(|| Error::MapFile("missing required key `g`".into()))?,
            z0: z0.unwrap_or(Complex64::new(0.0, 0.0)),
            singularities: singularities.unwrap_or_default(),
        })
    }

    pub fn build(&self, label: impl Into<String>) -> Result<HarmonicMap> {
        HarmonicMap::with_singularities(
            parse(&self.h)?,
            parse(&self.g)?,
            self.z0,
            label,
            &self.singularities,
        )
    }
}

impl HarmonicMap {
    pub fn from_map_source(text: &str, label: impl Into<String>) -> Result<Self> {
        MapFile::parse(text)?.build(label)
    }

    pub fn from_map_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MapFile(format!("{}: {e}", path.display())))?;
        Self::from_map_source(&text, path.display().to_string())
    }
}

fn parse_real(s: &str, whole: &str) -> Result<f64> {
    let bad = || Error::MapFile(format!("malformed complex literal `{whole}`"));
    if s.is_empty() || s.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E') {
        return Err(bad());
    }
    let v: f64 = s.parse().map_err(|_| bad())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Parses `a+bi` style literals: `1`, `-0.5`, `2i`, `-i`, `0.5-0.25i`.
pub fn parse_complex_literal(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::MapFile(format!("malformed complex literal `{text}`"));
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i') else {
        return Ok(Complex64::new(parse_real(&s, text)?, 0.0));
    };
    // split at the last sign that is not a leading sign or an exponent sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re_part, im_part) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("", body),
    };
    let re = if re_part.is_empty() {
        0.0
    } else {
        parse_real(re_part, text)?
    };
    let im = match im_part {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => parse_real(other.strip_prefix('+').unwrap_or(other), text)?,
    };
    Ok(Complex64::new(re, im))
}

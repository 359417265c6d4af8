//! Severity table: the versioned parameter file mapping every
//! (distortion kind, level) to its concrete parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::distort::DistortionKind;
use crate::error::{Error, Result};

/// The table file shipped with the crate.
pub const DEFAULT_TABLE_TEXT: &str = include_str!("../../data/severity_table.txt");

/// Named parameters for one (kind, level) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    params: Vec<(String, f64)>,
}

impl ParamSet {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::invalid(format!("missing severity parameter `{name}`")))
    }

    /// First parameter on the table line: the severity-governing scalar.
    pub fn governing(&self) -> f64 {
        self.params[0].1
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }
}

/// Parsed severity table for all 25 kinds x 5 levels.
#[derive(Clone, Debug)]
pub struct SeverityTable {
    cells: BTreeMap<(DistortionKind, u8), ParamSet>,
    digest: String,
}

impl SeverityTable {
    /// Parse from the table text format; validates totality and the
    /// strict monotonicity of every kind's governing parameter.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let kind_name = fields
                .next()
                .ok_or_else(|| Error::Format(format!("line {}: empty", lineno + 1)))?;
            let kind = DistortionKind::from_name(kind_name).ok_or_else(|| {
                Error::Format(format!("line {}: unknown kind `{kind_name}`", lineno + 1))
            })?;
            let level: u8 = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Format(format!("line {}: bad level", lineno + 1)))?;
            if !(1..=5).contains(&level) {
                return Err(Error::Format(format!(
                    "line {}: level {level} outside 1..5",
                    lineno + 1
                )));
            }
            let mut params = Vec::new();
            for tok in fields {
                let (name, value) = tok.split_once('=').ok_or_else(|| {
                    Error::Format(format!("line {}: `{tok}` is not key=value", lineno + 1))
                })?;
                let value: f64 = value.parse().map_err(|_| {
                    Error::Format(format!("line {}: bad value in `{tok}`", lineno + 1))
                })?;
                params.push((name.to_string(), value));
            }
            if params.is_empty() {
                return Err(Error::Format(format!(
                    "line {}: no parameters",
                    lineno + 1
                )));
            }
            if cells.insert((kind, level), ParamSet { params }).is_some() {
                return Err(Error::Format(format!(
                    "line {}: duplicate cell {kind_name} {level}",
                    lineno + 1
                )));
            }
        }

        let table = SeverityTable {
            cells,
            digest: hex_sha256(text.as_bytes()),
        };
        table.validate()?;
        Ok(table)
    }

    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TABLE_TEXT).expect("shipped severity table is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        for kind in DistortionKind::ALL {
            let mut prev: Option<f64> = None;
            let mut dir: Option<bool> = None; // true = increasing
            for level in 1..=5u8 {
                let cell = self.cells.get(&(kind, level)).ok_or_else(|| {
                    Error::Format(format!("missing cell {} {level}", kind.name()))
                })?;
                let g = cell.governing();
                if let Some(p) = prev {
                    let increasing = g > p;
                    if g == p {
                        return Err(Error::Format(format!(
                            "{}: governing parameter not strictly monotone",
                            kind.name()
                        )));
                    }
                    if let Some(d) = dir {
                        if d != increasing {
                            return Err(Error::Format(format!(
                                "{}: governing parameter changes direction",
                                kind.name()
                            )));
                        }
                    }
                    dir = Some(increasing);
                }
                prev = Some(g);
            }
        }
        Ok(())
    }

    pub fn params(&self, kind: DistortionKind, level: u8) -> Result<&ParamSet> {
        if !(1..=5).contains(&level) {
            return Err(Error::invalid(format!("level {level} outside 1..5")));
        }
        self.cells
            .get(&(kind, level))
            .ok_or_else(|| Error::invalid(format!("no cell for {} {level}", kind.name())))
    }

    /// SHA-256 hex digest of the exact table text, for run manifests.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Canonical re-serialization (sorted by kind then level).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ((kind, level), cell) in &self.cells {
            let _ = write!(out, "{} {}", kind.name(), level);
            for (name, value) in &cell.params {
                let _ = write!(out, " {name}={value}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_parses_and_is_total() {
        let t = SeverityTable::builtin();
        for kind in DistortionKind::ALL {
            for level in 1..=5 {
                t.params(kind, level).unwrap();
            }
        }
    }

    #[test]
    fn governing_parameter_is_monotone() {
        let t = SeverityTable::builtin();
        let g1 = t.params(DistortionKind::GaussianBlur, 1).unwrap().governing();
        let g5 = t.params(DistortionKind::GaussianBlur, 5).unwrap().governing();
        assert!(g1 < g5);
    }

    #[test]
    fn digest_matches_recomputed_digest_of_shipped_file() {
        let t = SeverityTable::builtin();
        assert_eq!(t.digest(), hex_sha256(DEFAULT_TABLE_TEXT.as_bytes()));
        assert_eq!(t.digest().len(), 64);
    }

    #[test]
    fn rejects_non_monotone_and_partial_tables() {
        assert!(SeverityTable::parse("gaussian_blur 1 sigma=1\n").is_err());
        let mut bad = String::new();
        for kind in DistortionKind::ALL {
            for level in 1..=5 {
                // Constant governing parameter: not strictly monotone.
                bad.push_str(&format!("{} {} p=1\n", kind.name(), level));
            }
        }
        assert!(SeverityTable::parse(&bad).is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(SeverityTable::parse("made_up_kind 1 x=1\n").is_err());
        assert!(SeverityTable::parse("gaussian_blur 9 sigma=1\n").is_err());
        assert!(SeverityTable::parse("gaussian_blur 1 sigma\n").is_err());
    }

    #[test]
    fn level_zero_and_six_rejected_by_params() {
        let t = SeverityTable::builtin();
        assert!(t.params(DistortionKind::Contrast, 0).is_err());
        assert!(t.params(DistortionKind::Contrast, 6).is_err());
    }
}

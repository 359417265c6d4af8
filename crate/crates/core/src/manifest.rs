//! Dataset manifests: CSV files mapping image paths to opinion scores,
//! with optional reference paths (FR mode), content grouping and fixed
//! author-provided splits.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Fixed split assignment from an author-provided `split` column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    fn from_str(s: &str) -> Result<SplitTag> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" | "validation" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            other => Err(Error::Format(format!("unknown split tag `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub mos: f64,
    pub ref_path: Option<PathBuf>,
    pub content_id: Option<String>,
    pub split: Option<SplitTag>,
}

/// Validated list of dataset entries.
#[derive(Clone, Debug)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Validate scores and the all-or-none optional columns. Does not touch
    /// the filesystem; use [`DatasetManifest::load`] for that.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("manifest has no entries"));
        }
        if entries.iter().any(|e| !e.mos.is_finite()) {
            return Err(Error::invalid("manifest contains non-finite mos"));
        }
        for (name, count) in [
            ("content_id", entries.iter().filter(|e| e.content_id.is_some()).count()),
            ("ref_path", entries.iter().filter(|e| e.ref_path.is_some()).count()),
            ("split", entries.iter().filter(|e| e.split.is_some()).count()),
        ] {
            if count != 0 && count != entries.len() {
                return Err(Error::invalid(format!(
                    "column {name} must be present on all rows or none"
                )));
            }
        }
        Ok(DatasetManifest { entries })
    }

    /// Parse a manifest CSV (`path,mos[,ref_path][,content_id][,split]`)
    /// and verify that every referenced image exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &manifest.entries {
            for p in [Some(&e.path), e.ref_path.as_ref()].into_iter().flatten() {
                let resolved = resolve(base, p);
                if !resolved.exists() {
                    return Err(Error::invalid(format!(
                        "manifest references missing file {}",
                        resolved.display()
                    )));
                }
            }
        }
        Ok(manifest)
    }

    /// Parse CSV text. Header names select columns; order is free; extra
    /// columns are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty manifest".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |name: &str| cols.iter().position(|c| *c == name);
        let path_col = find("path")
            .ok_or_else(|| Error::Format("manifest needs a `path` column".into()))?;
        let mos_col = find("mos")
            .ok_or_else(|| Error::Format("manifest needs a `mos` column".into()))?;
        let ref_col = find("ref_path");
        let content_col = find("content_id");
        let split_col = find("split");

        let mut entries = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |col: Option<usize>| -> Option<&str> {
                col.and_then(|c| fields.get(c)).copied().filter(|s| !s.is_empty())
            };
            let path = get(Some(path_col)).ok_or_else(|| {
                Error::Format(format!("line {}: missing path", lineno + 2))
            })?;
            let mos: f64 = get(Some(mos_col))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("line {}: bad mos", lineno + 2)))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                mos,
                ref_path: get(ref_col).map(PathBuf::from),
                content_id: get(content_col).map(String::from),
                split: get(split_col).map(SplitTag::from_str).transpose()?,
            });
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mos_values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mos).collect()
    }

    pub fn has_content_ids(&self) -> bool {
        self.entries.first().map(|e| e.content_id.is_some()).unwrap_or(false)
    }

    pub fn has_fixed_split(&self) -> bool {
        self.entries.first().map(|e| e.split.is_some()).unwrap_or(false)
    }

    pub fn has_refs(&self) -> bool {
        self.entries.first().map(|e| e.ref_path.is_some()).unwrap_or(false)
    }
}

/// Resolve a manifest-relative path.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

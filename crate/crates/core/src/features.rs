//! Frozen-encoder feature extraction and the binary feature file format.
//!
//! A feature vector is the concatenation of pooled backbone features from
//! the content and quality encoders, each at original and half scale:
//! `[content@1.0 | content@0.5 | quality@1.0 | quality@0.5]`. Either
//! encoder may be absent; its segments are simply omitted.

use std::io::{Read, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::encoder::{encode, EncoderState};
use crate::raster::Image;
use crate::resample::{rescale, ResizeMethod};

const SCALES: [f64; 2] = [1.0, 0.5];

/// Frozen encoder pair used for extraction.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    content: Option<EncoderState>,
    quality: Option<EncoderState>,
}

impl FeatureExtractor {
    pub fn new(content: Option<EncoderState>, quality: Option<EncoderState>) -> Result<Self> {
        if content.is_none() && quality.is_none() {
            return Err(Error::invalid("need at least one encoder"));
        }
        Ok(FeatureExtractor { content, quality })
    }

    /// Output dimension: two scales of each present encoder's backbone.
    pub fn dim(&self) -> usize {
        let f = |e: &Option<EncoderState>| {
            e.as_ref()
                .map(|s| s.config.backbone_dim() * SCALES.len())
                .unwrap_or(0)
        };
        f(&self.content) + f(&self.quality)
    }

    /// Pooled backbone features (pre-projection-head) at both scales,
    /// concatenated content-first. Pure; the encoders are never mutated.
    pub fn extract(&self, img: &Image) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for enc in [&self.content, &self.quality].into_iter().flatten() {
            for scale in SCALES {
                let scaled = if scale == 1.0 {
                    img.clone()
                } else {
                    rescale(img, scale, ResizeMethod::Bilinear)?
                };
                let min = enc.config.min_input_side();
                if scaled.width() < min || scaled.height() < min {
                    return Err(Error::invalid(format!(
                        "image {}x{} below encoder minimum {min} at scale {scale}",
                        scaled.width(),
                        scaled.height()
                    )));
                }
                let encoded = encode(enc, &[&scaled])?;
                out.extend_from_slice(&encoded.pooled.data);
            }
        }
        Ok(out)
    }

    pub fn extract_all(&self, images: &[Image]) -> Result<Vec<Vec<f64>>> {
        images.iter().map(|img| self.extract(img)).collect()
    }
}

const MAGIC: &[u8; 4] = b"RIQF";

/// Feature file: magic `RIQF`, u32 row count, u32 dim, then row-major
/// little-endian f32 values.
pub fn write_features(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::invalid("inconsistent feature dimensions"));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(rows.len() as u32).to_le_bytes())?;
    f.write_all(&(dim as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(rows.len() * dim * 4);
    for row in rows {
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = std::fs::read(path)?;
    let mut r = std::io::Cursor::new(&bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("feature file truncated".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad feature file magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| Error::Format("feature file truncated".into()))?;
    let rows = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)
        .map_err(|_| Error::Format("feature file truncated".into()))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    let mut out = Vec::with_capacity(rows);
    let mut fbuf = [0u8; 4];
    for _ in 0..rows {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut fbuf)
                .map_err(|_| Error::Format("feature file truncated".into()))?;
            row.push(f32::from_le_bytes(fbuf) as f64);
        }
        out.push(row);
    }
    Ok(out)
}

/// Companion CSV mapping feature row index to image path.
pub fn write_feature_index(path: &Path, image_paths: &[String]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "row,path")?;
    for (i, p) in image_paths.iter().enumerate() {
        writeln!(f, "{i},{p}")?;
    }
    Ok(())
}

//! The quality-distortion augmentation bank: 25 kinds, 5 severity levels
//! each, deterministic under a 64-bit seed.
//!
//! Stochastic kinds (the noises, jitter, color block, non-eccentricity,
//! color shift, denoise) draw every random number from a generator seeded
//! solely by `DistortionSpec::seed`, so `apply` is a pure function of
//! `(image, spec)`.

mod severity;

pub use severity::{hex_sha256, ParamSet, SeverityTable, DEFAULT_TABLE_TEXT};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::color::{edit_in_hsv, edit_in_lab, edit_in_ycbcr};
use crate::error::{Error, Result};
use crate::kernel::{
    convolve2d, convolve_plane, make_box_kernel, make_disk_kernel, make_gaussian_kernel,
    make_line_kernel,
};
use crate::raster::{Image, CHANNELS};
use crate::resample::{resize, ResizeMethod};

/// The 25 distortion kinds of the augmentation bank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistortionKind {
    ResizeBicubic,
    ResizeBilinear,
    ResizeLanczos,
    Pixelate,
    MotionBlur,
    GaussianBlur,
    LensBlur,
    MeanShift,
    Contrast,
    UnsharpMask,
    Jitter,
    ColorBlock,
    NonEccentricity,
    JpegCompression,
    WhiteNoiseRgb,
    WhiteNoiseYcbcr,
    ImpulseNoise,
    MultiplicativeNoise,
    Denoise,
    Brighten,
    Darken,
    ColorDiffuse,
    ColorShift,
    ColorSaturate,
    Saturate,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 25] = [
        DistortionKind::ResizeBicubic,
        DistortionKind::ResizeBilinear,
        DistortionKind::ResizeLanczos,
        DistortionKind::Pixelate,
        DistortionKind::MotionBlur,
        DistortionKind::GaussianBlur,
        DistortionKind::LensBlur,
        DistortionKind::MeanShift,
        DistortionKind::Contrast,
        DistortionKind::UnsharpMask,
        DistortionKind::Jitter,
        DistortionKind::ColorBlock,
        DistortionKind::NonEccentricity,
        DistortionKind::JpegCompression,
        DistortionKind::WhiteNoiseRgb,
        DistortionKind::WhiteNoiseYcbcr,
        DistortionKind::ImpulseNoise,
        DistortionKind::MultiplicativeNoise,
        DistortionKind::Denoise,
        DistortionKind::Brighten,
        DistortionKind::Darken,
        DistortionKind::ColorDiffuse,
        DistortionKind::ColorShift,
        DistortionKind::ColorSaturate,
        DistortionKind::Saturate,
    ];

    /// Stable snake_case name used in the severity table, CLI and manifests.
    pub fn name(&self) -> &'static str {
        match self {
            DistortionKind::ResizeBicubic => "resize_bicubic",
            DistortionKind::ResizeBilinear => "resize_bilinear",
            DistortionKind::ResizeLanczos => "resize_lanczos",
            DistortionKind::Pixelate => "pixelate",
            DistortionKind::MotionBlur => "motion_blur",
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::LensBlur => "lens_blur",
            DistortionKind::MeanShift => "mean_shift",
            DistortionKind::Contrast => "contrast",
            DistortionKind::UnsharpMask => "unsharp_mask",
            DistortionKind::Jitter => "jitter",
            DistortionKind::ColorBlock => "color_block",
            DistortionKind::NonEccentricity => "non_eccentricity",
            DistortionKind::JpegCompression => "jpeg_compression",
            DistortionKind::WhiteNoiseRgb => "white_noise_rgb",
            DistortionKind::WhiteNoiseYcbcr => "white_noise_ycbcr",
            DistortionKind::ImpulseNoise => "impulse_noise",
            DistortionKind::MultiplicativeNoise => "multiplicative_noise",
            DistortionKind::Denoise => "denoise",
            DistortionKind::Brighten => "brighten",
            DistortionKind::Darken => "darken",
            DistortionKind::ColorDiffuse => "color_diffuse",
            DistortionKind::ColorShift => "color_shift",
            DistortionKind::ColorSaturate => "color_saturate",
            DistortionKind::Saturate => "saturate",
        }
    }

    pub fn from_name(name: &str) -> Option<DistortionKind> {
        DistortionKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Kinds whose severity is expected to be strictly MSE-monotone on
    /// textured images: all blurs, all noises, JPEG, pixelate, all resizes.
    pub fn is_mse_monotone(&self) -> bool {
        matches!(
            self,
            DistortionKind::ResizeBicubic
                | DistortionKind::ResizeBilinear
                | DistortionKind::ResizeLanczos
                | DistortionKind::Pixelate
                | DistortionKind::MotionBlur
                | DistortionKind::GaussianBlur
                | DistortionKind::LensBlur
                | DistortionKind::JpegCompression
                | DistortionKind::WhiteNoiseRgb
                | DistortionKind::WhiteNoiseYcbcr
                | DistortionKind::ImpulseNoise
                | DistortionKind::MultiplicativeNoise
        )
    }
}

/// One draw from the augmentation bank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub level: u8,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, level: u8, seed: u64) -> Result<Self> {
        if !(1..=5).contains(&level) {
            return Err(Error::invalid(format!("level {level} outside 1..5")));
        }
        Ok(DistortionSpec { kind, level, seed })
    }
}

/// All 25 kinds in registry order.
pub fn list_kinds() -> Vec<DistortionKind> {
    DistortionKind::ALL.to_vec()
}

/// Severity-table row for a (kind, level).
pub fn params_for(table: &SeverityTable, kind: DistortionKind, level: u8) -> Result<&ParamSet> {
    table.params(kind, level)
}

/// Draw `n` distinct kinds uniformly without replacement; levels uniform in
/// 1..5; each spec gets a fresh seed from `rng`.
pub fn sample_specs(rng: &mut impl Rng, n: usize) -> Result<Vec<DistortionSpec>> {
    if n == 0 || n > DistortionKind::ALL.len() {
        return Err(Error::invalid(format!(
            "n must be in 1..=25, got {n}"
        )));
    }
    let mut kinds = DistortionKind::ALL;
    let chosen: Vec<DistortionKind> = kinds.partial_shuffle(rng, n).0.to_vec();
    chosen
        .into_iter()
        .map(|kind| DistortionSpec::new(kind, rng.gen_range(1..=5), rng.gen()))
        .collect()
}

/// Apply one distortion. Output has the input's dimensions; deterministic
/// given `(img, spec)`.
pub fn apply(img: &Image, spec: &DistortionSpec, table: &SeverityTable) -> Result<Image> {
    if !(1..=5).contains(&spec.level) {
        return Err(Error::invalid(format!("level {} outside 1..5", spec.level)));
    }
    let p = table.params(spec.kind, spec.level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = img.dims();

    let out = match spec.kind {
        DistortionKind::ResizeBicubic => down_up(img, p.get("scale")?, ResizeMethod::Bicubic)?,
        DistortionKind::ResizeBilinear => down_up(img, p.get("scale")?, ResizeMethod::Bilinear)?,
        DistortionKind::ResizeLanczos => down_up(img, p.get("scale")?, ResizeMethod::Lanczos3)?,
        DistortionKind::Pixelate => down_up(img, p.get("scale")?, ResizeMethod::Nearest)?,
        DistortionKind::MotionBlur => {
            let k = make_line_kernel(p.get("length")? as usize, p.get("angle")?)?;
            convolve2d(img, &k)?
        }
        DistortionKind::GaussianBlur => {
            let k = make_gaussian_kernel(p.get("sigma")?)?;
            convolve2d(img, &k)?
        }
        DistortionKind::LensBlur => {
            let k = make_disk_kernel(p.get("radius")?)?;
            convolve2d(img, &k)?
        }
        DistortionKind::MeanShift => {
            let delta = p.get("delta")? as f32;
            img.map(|v| v + delta)
        }
        DistortionKind::Contrast => sigmoid_contrast(img, p.get("gain")?),
        DistortionKind::UnsharpMask => {
            let k = make_gaussian_kernel(p.get("radius")?)?;
            let blurred = convolve2d(img, &k)?;
            let amount = p.get("amount")? as f32;
            let mut out = img.clone();
            for c in 0..CHANNELS {
                let (op, bp) = (img.plane(c), blurred.plane(c));
                for (i, v) in out.plane_mut(c).iter_mut().enumerate() {
                    *v = (op[i] + amount * (op[i] - bp[i])).clamp(0.0, 1.0);
                }
            }
            out
        }
        DistortionKind::Jitter => jitter(img, p.get("magnitude")?, &mut rng),
        DistortionKind::ColorBlock => color_block(
            img,
            p.get("count")? as usize,
            p.get("block")? as usize,
            &mut rng,
        )?,
        DistortionKind::NonEccentricity => non_eccentricity(
            img,
            p.get("radius")? as isize,
            p.get("patches")? as usize,
            p.get("patch")? as usize,
            &mut rng,
        )?,
        DistortionKind::JpegCompression => jpeg_round_trip(img, p.get("quality")? as u8)?,
        DistortionKind::WhiteNoiseRgb => {
            let normal = normal_dist(p.get("std")?)?;
            img.map_with_rng(&mut rng, |v, r| v + normal.sample(r) as f32)
        }
        DistortionKind::WhiteNoiseYcbcr => {
            let normal = normal_dist(p.get("std")?)?;
            edit_in_ycbcr(img, |conv| {
                *conv = conv.map_with_rng(&mut rng, |v, r| v + normal.sample(r) as f32);
            })
        }
        DistortionKind::ImpulseNoise => impulse_noise(img, p.get("prob")?, &mut rng),
        DistortionKind::MultiplicativeNoise => {
            let normal = normal_dist(p.get("std")?)?;
            img.map_with_rng(&mut rng, |v, r| v * (1.0 + normal.sample(r) as f32))
        }
        DistortionKind::Denoise => {
            let normal = normal_dist(p.get("std")?)?;
            let noisy = img.map_with_rng(&mut rng, |v, r| v + normal.sample(r) as f32);
            let k = if rng.gen_bool(0.5) {
                make_gaussian_kernel(1.2)?
            } else {
                make_box_kernel(3)?
            };
            convolve2d(&noisy, &k)?
        }
        DistortionKind::Brighten => {
            let gamma = p.get("gamma")? as f32;
            img.map(|v| v.max(0.0).powf(gamma))
        }
        DistortionKind::Darken => {
            let gamma = p.get("gamma")? as f32;
            img.map(|v| v.max(0.0).powf(gamma))
        }
        DistortionKind::ColorDiffuse => {
            let k = make_gaussian_kernel(p.get("sigma")?)?;
            edit_in_lab(img, |conv| {
                for c in 1..CHANNELS {
                    let blurred = convolve_plane(conv.plane(c), w, h, &k);
                    conv.plane_mut(c).copy_from_slice(&blurred);
                }
            })
        }
        DistortionKind::ColorShift => color_shift(img, p.get("offset")?, &mut rng),
        DistortionKind::ColorSaturate => {
            let factor = p.get("factor")? as f32;
            edit_in_hsv(img, |conv| {
                for v in conv.plane_mut(1) {
                    *v = (*v * factor).clamp(0.0, 1.0);
                }
            })
        }
        DistortionKind::Saturate => {
            let factor = p.get("factor")? as f32;
            edit_in_lab(img, |conv| {
                for c in 1..CHANNELS {
                    for v in conv.plane_mut(c) {
                        *v = ((*v - 0.5) * factor + 0.5).clamp(0.0, 1.0);
                    }
                }
            })
        }
    };
    debug_assert!(out.in_range());
    Ok(out)
}

fn normal_dist(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|e| Error::invalid(format!("bad noise std: {e}")))
}

/// Downscale by `scale`, then upscale back to the original size.
fn down_up(img: &Image, scale: f64, method: ResizeMethod) -> Result<Image> {
    let (w, h) = img.dims();
    let dw = ((w as f64 * scale).round() as usize).max(1);
    let dh = ((h as f64 * scale).round() as usize).max(1);
    let small = resize(img, dw, dh, method)?;
    resize(&small, w, h, method)
}

/// Logistic remap centred at 0.5, rescaled so 0 and 1 stay fixed.
fn sigmoid_contrast(img: &Image, gain: f64) -> Image {
    let sig = |x: f64| 1.0 / (1.0 + (-gain * (x - 0.5)).exp());
    let lo = sig(0.0);
    let hi = sig(1.0);
    img.map(|v| (((sig(v as f64) - lo) / (hi - lo)) as f32).clamp(0.0, 1.0))
}

/// Warp each pixel by an independent uniform offset in [-m, m].
fn jitter(img: &Image, magnitude: f64, rng: &mut ChaCha8Rng) -> Image {
    let (w, h) = img.dims();
    let mut out = Image::new(w, h).expect("same dims");
    for y in 0..h {
        for x in 0..w {
            let dx = rng.gen_range(-magnitude..=magnitude);
            let dy = rng.gen_range(-magnitude..=magnitude);
            for c in 0..CHANNELS {
                out.set(c, x, y, bilinear_at(img, c, x as f64 + dx, y as f64 + dy));
            }
        }
    }
    out
}

/// Bilinear point sample with replicate borders.
fn bilinear_at(img: &Image, c: usize, x: f64, y: f64) -> f32 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = (x - x0) as f32;
    let fy = (y - y0) as f32;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let v00 = img.get_clamped(c, x0, y0);
    let v10 = img.get_clamped(c, x0 + 1, y0);
    let v01 = img.get_clamped(c, x0, y0 + 1);
    let v11 = img.get_clamped(c, x0 + 1, y0 + 1);
    let top = v00 * (1.0 - fx) + v10 * fx;
    let bot = v01 * (1.0 - fx) + v11 * fx;
    (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0)
}

/// Paste `count` uniformly coloured `block`-sized squares at random spots.
fn color_block(img: &Image, count: usize, block: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    let (w, h) = img.dims();
    if w < block || h < block {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than color block size {block}"
        )));
    }
    let mut out = img.clone();
    for _ in 0..count {
        let x0 = rng.gen_range(0..=w - block);
        let y0 = rng.gen_range(0..=h - block);
        let color: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
        for c in 0..CHANNELS {
            for y in y0..y0 + block {
                for x in x0..x0 + block {
                    out.set(c, x, y, color[c]);
                }
            }
        }
    }
    Ok(out)
}

/// Displace random patches by small offsets, reading from the original.
fn non_eccentricity(
    img: &Image,
    radius: isize,
    patches: usize,
    patch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Image> {
    let (w, h) = img.dims();
    let margin = patch + radius.unsigned_abs();
    if w < margin || h < margin {
        return Err(Error::invalid(format!(
            "image {w}x{h} smaller than non-eccentricity working size {margin}"
        )));
    }
    let mut out = img.clone();
    for _ in 0..patches {
        let sx = rng.gen_range(0..=w - patch) as isize;
        let sy = rng.gen_range(0..=h - patch) as isize;
        let dx = rng.gen_range(-radius..=radius);
        let dy = rng.gen_range(-radius..=radius);
        let tx = (sx + dx).clamp(0, (w - patch) as isize) as usize;
        let ty = (sy + dy).clamp(0, (h - patch) as isize) as usize;
        for c in 0..CHANNELS {
            for y in 0..patch {
                for x in 0..patch {
                    let v = img.get(c, sx as usize + x, sy as usize + y);
                    out.set(c, tx + x, ty + y, v);
                }
            }
        }
    }
    Ok(out)
}

/// Encode to an in-memory JPEG at the given quality factor, decode back.
fn jpeg_round_trip(img: &Image, quality: u8) -> Result<Image> {
    let (w, h) = img.dims();
    let mut bytes = Vec::new();
    let mut cursor = std::io::Cursor::new(&mut bytes);
    let mut enc = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut cursor, quality);
    enc.encode(&img.to_rgb8(), w as u32, h as u32, image::ColorType::Rgb8)
        .map_err(|e| Error::Format(format!("jpeg encode: {e}")))?;
    drop(enc);
    drop(cursor);
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Jpeg)
        .map_err(|e| Error::Format(format!("jpeg decode: {e}")))?
        .to_rgb8();
    Image::from_rgb8(decoded.width() as usize, decoded.height() as usize, decoded.as_raw())
}

/// Salt-and-pepper: with probability `prob`, a pixel goes full black or
/// full white across all channels.
fn impulse_noise(img: &Image, prob: f64, rng: &mut ChaCha8Rng) -> Image {
    let (w, h) = img.dims();
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            if rng.gen_bool(prob) {
                let v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                for c in 0..CHANNELS {
                    out.set(c, x, y, v);
                }
            }
        }
    }
    out
}

/// Translate the green plane by a random direction of the given magnitude,
/// blending through the normalized gradient magnitude of the original.
fn color_shift(img: &Image, offset: f64, rng: &mut ChaCha8Rng) -> Image {
    let (w, h) = img.dims();
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut dx = (offset * angle.cos()).round() as isize;
    let mut dy = (offset * angle.sin()).round() as isize;
    if dx == 0 && dy == 0 {
        dx = offset.round().max(1.0) as isize;
        dy = 0;
    }

    // Luma gradient magnitude, normalized to [0, 1].
    let mut grad = vec![0.0f32; w * h];
    let luma = |x: isize, y: isize| -> f32 {
        0.299 * img.get_clamped(0, x, y)
            + 0.587 * img.get_clamped(1, x, y)
            + 0.114 * img.get_clamped(2, x, y)
    };
    let mut max_g = 0.0f32;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (luma(x + 1, y) - luma(x - 1, y)) * 0.5;
            let gy = (luma(x, y + 1) - luma(x, y - 1)) * 0.5;
            let g = (gx * gx + gy * gy).sqrt();
            grad[y as usize * w + x as usize] = g;
            max_g = max_g.max(g);
        }
    }
    if max_g > 0.0 {
        for g in &mut grad {
            *g /= max_g;
        }
    }

    let mut out = img.clone();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let shifted = img.get_clamped(1, x - dx, y - dy);
            let i = y as usize * w + x as usize;
            let wgt = grad[i];
            let orig = img.get(1, x as usize, y as usize);
            out.set(1, x as usize, y as usize, orig * (1.0 - wgt) + shifted * wgt);
        }
    }
    out
}

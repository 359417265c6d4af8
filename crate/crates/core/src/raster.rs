//! Planar floating-point RGB raster and rectangle primitives.
//!
//! `Image` is the pixel currency of the whole toolkit: three planes (R, G, B)
//! of `f32` samples in `[0, 1]`, row-major within each plane. Every public
//! operation clips its output back into `[0, 1]` on exit.

use crate::error::{Error, Result};

/// Planar RGB image, samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// Number of colour planes an [`Image`] carries.
pub const CHANNELS: usize = 3;

impl Image {
    /// Black image of the given size.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Image {
            width,
            height,
            data: vec![0.0; width * height * CHANNELS],
        })
    }

    /// Constant-valued image.
    pub fn splat(width: usize, height: usize, value: f32) -> Result<Self> {
        let mut img = Image::new(width, height)?;
        img.data.fill(value.clamp(0.0, 1.0));
        Ok(img)
    }

    /// Wrap an existing planar buffer. Length must be `width * height * 3`;
    /// samples must be finite and within `[0, 1]`.
    pub fn from_planar(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::invalid(format!(
                "planar buffer length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                CHANNELS
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("sample {bad} outside [0,1]")));
        }
        Ok(Image { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// (width, height) pair.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Full planar buffer, plane-major.
    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[c * self.width * self.height + y * self.width + x] = v;
    }

    /// Sample with replicate-border semantics: coordinates outside the raster
    /// clamp to the nearest edge pixel.
    #[inline]
    pub fn get_clamped(&self, c: usize, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(c, xc, yc)
    }

    /// Apply `f` to every sample, then clip to `[0, 1]`.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        let data = self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Like [`Image::map`] but threads an RNG through in sample order
    /// (plane-major), for seeded per-sample noise.
    pub fn map_with_rng<R: rand::Rng>(&self, rng: &mut R, f: impl Fn(f32, &mut R) -> f32) -> Image {
        let data = self
            .data
            .iter()
            .map(|&v| f(v, rng).clamp(0.0, 1.0))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Clip all samples into `[0, 1]` in place. Non-finite samples are an
    /// internal bug; they are mapped to 0 so the invariant holds regardless.
    pub fn clip_in_place(&mut self) {
        for v in &mut self.data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
    }

    /// Exact sub-raster copy.
    pub fn crop(&self, r: Rect) -> Result<Image> {
        if !r.fits_in(self.width, self.height) {
            return Err(Error::invalid(format!(
                "crop rect {r:?} out of bounds for {}x{} image",
                self.width, self.height
            )));
        }
        let mut out = Image::new(r.w, r.h)?;
        for c in 0..CHANNELS {
            for y in 0..r.h {
                let src_off = c * self.width * self.height + (r.y + y) * self.width + r.x;
                let dst_off = c * r.w * r.h + y * r.w;
                out.data[dst_off..dst_off + r.w]
                    .copy_from_slice(&self.data[src_off..src_off + r.w]);
            }
        }
        Ok(out)
    }

    /// Mean squared error against another image of the same size.
    pub fn mse(&self, other: &Image) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::invalid("mse requires equal dimensions"));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Largest absolute per-sample difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f32> {
        if self.dims() != other.dims() {
            return Err(Error::invalid("max_abs_diff requires equal dimensions"));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// Interleaved 8-bit RGB rows (for codecs). Values map `round(v * 255)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * CHANNELS);
        for i in 0..n {
            for c in 0..CHANNELS {
                out.push((self.data[c * n + i].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    /// Inverse of [`Image::to_rgb8`]: interleaved 8-bit RGB, values map `v / 255`.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Image> {
        if rgb.len() != width * height * CHANNELS {
            return Err(Error::invalid("rgb8 buffer length mismatch"));
        }
        let n = width * height;
        let mut img = Image::new(width, height)?;
        for i in 0..n {
            for c in 0..CHANNELS {
                img.data[c * n + i] = rgb[i * CHANNELS + c] as f32 / 255.0;
            }
        }
        Ok(img)
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for c in 0..CHANNELS {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, x, y, self.get(c, self.width - 1 - x, y));
                }
            }
        }
        out
    }

    /// True if every sample is finite and within `[0, 1]`.
    pub fn in_range(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }
}

/// Axis-aligned pixel rectangle: top-left offset plus extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }

    /// Intersection area with another rect, in pixels.
    pub fn intersection_area(&self, other: &Rect) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 > x0 && y1 > y0 {
            (x1 - x0) * (y1 - y0)
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_layout_round_trips_through_rgb8() {
        let mut img = Image::new(3, 2).unwrap();
        img.set(0, 1, 0, 1.0);
        img.set(2, 2, 1, 0.5);
        let bytes = img.to_rgb8();
        assert_eq!(bytes.len(), 18);
        assert_eq!(bytes[3], 255); // pixel (1,0), R
        let back = Image::from_rgb8(3, 2, &bytes).unwrap();
        assert!(img.max_abs_diff(&back).unwrap() < 1.0 / 255.0);
    }

    #[test]
    fn from_planar_rejects_bad_lengths_and_values() {
        assert!(Image::from_planar(2, 2, vec![0.0; 11]).is_err());
        assert!(Image::from_planar(2, 2, vec![2.0; 12]).is_err());
        assert!(Image::from_planar(2, 2, vec![f32::NAN; 12]).is_err());
        assert!(Image::from_planar(2, 2, vec![0.5; 12]).is_ok());
    }

    #[test]
    fn crop_full_rect_is_identity() {
        let img = Image::splat(5, 4, 0.25).unwrap();
        let out = img.crop(Rect::new(0, 0, 5, 4)).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn crop_extracts_exact_subraster() {
        let mut img = Image::new(4, 4).unwrap();
        img.set(1, 2, 3, 0.75);
        let out = img.crop(Rect::new(1, 2, 3, 2)).unwrap();
        assert_eq!(out.dims(), (3, 2));
        assert_eq!(out.get(1, 1, 1), 0.75);
    }

    #[test]
    fn crop_out_of_bounds_errors() {
        let img = Image::new(4, 4).unwrap();
        assert!(img.crop(Rect::new(2, 2, 3, 2)).is_err());
        assert!(img.crop(Rect::new(0, 0, 0, 1)).is_err());
    }

    #[test]
    fn rect_intersection() {
        let a = Rect::new(0, 0, 160, 160);
        let b = Rect::new(80, 0, 160, 160);
        assert_eq!(a.intersection_area(&b), 80 * 160);
        let c = Rect::new(200, 200, 10, 10);
        assert_eq!(a.intersection_area(&c), 0);
    }

    #[test]
    fn get_clamped_replicates_border() {
        let mut img = Image::new(2, 2).unwrap();
        img.set(0, 0, 0, 0.5);
        assert_eq!(img.get_clamped(0, -3, -3), 0.5);
        assert_eq!(img.get_clamped(0, 5, 0), img.get(0, 1, 0));
    }
}

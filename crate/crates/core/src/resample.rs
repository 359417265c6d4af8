//! Separable image resampling: nearest, bilinear, bicubic (Catmull-Rom) and
//! Lanczos3. When minifying, filter support is stretched by the scale ratio
//! so the kernel acts as a proper low-pass.

use crate::error::{Error, Result};
use crate::raster::{Image, CHANNELS};

/// Interpolation filter for [`resize`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResizeMethod {
    Nearest,
    Bilinear,
    Bicubic,
    Lanczos3,
}

impl ResizeMethod {
    pub fn name(&self) -> &'static str {
        match self {
            ResizeMethod::Nearest => "nearest",
            ResizeMethod::Bilinear => "bilinear",
            ResizeMethod::Bicubic => "bicubic",
            ResizeMethod::Lanczos3 => "lanczos3",
        }
    }

    fn support(&self) -> f64 {
        match self {
            ResizeMethod::Nearest => 0.5,
            ResizeMethod::Bilinear => 1.0,
            ResizeMethod::Bicubic => 2.0,
            ResizeMethod::Lanczos3 => 3.0,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            ResizeMethod::Nearest => {
                if x.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            ResizeMethod::Bilinear => triangle(x),
            ResizeMethod::Bicubic => catmull_rom(x),
            ResizeMethod::Lanczos3 => lanczos(x, 3.0),
        }
    }
}

fn triangle(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        1.0 - a
    } else {
        0.0
    }
}

/// Catmull-Rom spline (Mitchell-Netravali with b=0, c=0.5).
fn catmull_rom(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        1.5 * a * a * a - 2.5 * a * a + 1.0
    } else if a < 2.0 {
        -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0
    } else {
        0.0
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let a = x * std::f64::consts::PI;
        a.sin() / a
    }
}

fn lanczos(x: f64, taps: f64) -> f64 {
    if x.abs() < taps {
        sinc(x) * sinc(x / taps)
    } else {
        0.0
    }
}

/// Resample to `new_w` x `new_h`. Output samples are clipped to `[0, 1]`.
pub fn resize(img: &Image, new_w: usize, new_h: usize, method: ResizeMethod) -> Result<Image> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid("resize target dimensions must be >= 1"));
    }
    if (new_w, new_h) == img.dims() && method == ResizeMethod::Nearest {
        return Ok(img.clone());
    }
    // Horizontal pass into a w' x h buffer, then vertical pass.
    let horiz = resample_axis(img, new_w, method, Axis::X)?;
    resample_axis(&horiz, new_h, method, Axis::Y)
}

/// Uniform rescale by `factor` in both axes (dimensions rounded, min 1).
pub fn rescale(img: &Image, factor: f64, method: ResizeMethod) -> Result<Image> {
    if !(factor > 0.0) {
        return Err(Error::invalid("rescale factor must be > 0"));
    }
    let w = ((img.width() as f64 * factor).round() as usize).max(1);
    let h = ((img.height() as f64 * factor).round() as usize).max(1);
    resize(img, w, h, method)
}

enum Axis {
    X,
    Y,
}

fn resample_axis(img: &Image, new_len: usize, method: ResizeMethod, axis: Axis) -> Result<Image> {
    let (w, h) = img.dims();
    let (src_len, other_len) = match axis {
        Axis::X => (w, h),
        Axis::Y => (h, w),
    };
    let (out_w, out_h) = match axis {
        Axis::X => (new_len, h),
        Axis::Y => (w, new_len),
    };
    let ratio = src_len as f64 / new_len as f64;
    // When minifying, stretch the kernel so its footprint covers the source
    // pixels that map onto one output pixel.
    let scale = ratio.max(1.0);
    let support = method.support() * scale;

    let mut out = Image::new(out_w, out_h)?;
    let mut taps: Vec<(usize, f64)> = Vec::new();
    for o in 0..new_len {
        let center = (o as f64 + 0.5) * ratio - 0.5;
        let lo = (center - support).floor() as isize;
        let hi = (center + support).ceil() as isize;
        taps.clear();
        let mut sum = 0.0;
        for s in lo..=hi {
            let wgt = method.eval((s as f64 - center) / scale);
            if wgt == 0.0 {
                continue;
            }
            let si = s.clamp(0, src_len as isize - 1) as usize;
            taps.push((si, wgt));
            sum += wgt;
        }
        if sum == 0.0 {
            // Degenerate window; fall back to the nearest source sample.
            taps.push((center.round().clamp(0.0, (src_len - 1) as f64) as usize, 1.0));
            sum = 1.0;
        }
        for c in 0..CHANNELS {
            for t in 0..other_len {
                let mut acc = 0.0f64;
                for &(si, wgt) in &taps {
                    let v = match axis {
                        Axis::X => img.get(c, si, t),
                        Axis::Y => img.get(c, t, si),
                    };
                    acc += wgt * v as f64;
                }
                let v = (acc / sum).clamp(0.0, 1.0) as f32;
                match axis {
                    Axis::X => out.set(c, o, t, v),
                    Axis::Y => out.set(c, t, o, v),
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(w: usize, h: usize) -> Image {
        let mut img = Image::new(w, h).unwrap();
        for c in 0..CHANNELS {
            for y in 0..h {
                for x in 0..w {
                    img.set(c, x, y, ((x + y) % 2) as f32);
                }
            }
        }
        img
    }

    #[test]
    fn same_size_nearest_is_identity() {
        let img = checkerboard(7, 5);
        let out = resize(&img, 7, 5, ResizeMethod::Nearest).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_survives_every_method() {
        let img = Image::splat(9, 6, 0.37).unwrap();
        for m in [
            ResizeMethod::Nearest,
            ResizeMethod::Bilinear,
            ResizeMethod::Bicubic,
            ResizeMethod::Lanczos3,
        ] {
            let out = resize(&img, 4, 3, m).unwrap();
            for &v in out.samples() {
                assert!((v - 0.37).abs() < 1e-6, "method {m:?} broke constants");
            }
            let up = resize(&out, 9, 6, m).unwrap();
            for &v in up.samples() {
                assert!((v - 0.37).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_target_dimension_errors() {
        let img = checkerboard(4, 4);
        assert!(resize(&img, 0, 2, ResizeMethod::Bilinear).is_err());
        assert!(resize(&img, 2, 0, ResizeMethod::Bilinear).is_err());
    }

    /// Direct evaluation of the scaled triangle weights for a 4->2 shrink.
    fn bilinear_shrink_reference(img: &Image) -> Image {
        let mut out = Image::new(2, 2).unwrap();
        // ratio 2, scale 2: center_o = 2o + 0.5, taps at offsets -1..2 with
        // weights tri((s - center)/2)/2 renormalized -> [.125,.375,.375,.125]
        // with the s=-1 tap clamped to source index 0 (top/left rows).
        let wts = [0.125f64, 0.375, 0.375, 0.125];
        let tap_idx = |o: usize| -> [usize; 4] {
            let base = 2 * o as isize;
            [
                (base - 1).clamp(0, 3) as usize,
                base as usize,
                (base + 1) as usize,
                ((base + 2).min(3)) as usize,
            ]
        };
        for c in 0..CHANNELS {
            for oy in 0..2 {
                for ox in 0..2 {
                    let xs = tap_idx(ox);
                    let ys = tap_idx(oy);
                    let mut acc = 0.0;
                    for (wy, &sy) in wts.iter().zip(&ys) {
                        for (wx, &sx) in wts.iter().zip(&xs) {
                            acc += wy * wx * img.get(c, sx, sy) as f64;
                        }
                    }
                    out.set(c, ox, oy, acc.clamp(0.0, 1.0) as f32);
                }
            }
        }
        out
    }

    #[test]
    fn bilinear_downscale_matches_weight_oracle() {
        let img = checkerboard(4, 4);
        let got = resize(&img, 2, 2, ResizeMethod::Bilinear).unwrap();
        let want = bilinear_shrink_reference(&img);
        assert!(got.max_abs_diff(&want).unwrap() < 1e-6);
    }

    #[test]
    fn upscale_dimensions_and_range() {
        let img = checkerboard(5, 3);
        for m in [
            ResizeMethod::Nearest,
            ResizeMethod::Bilinear,
            ResizeMethod::Bicubic,
            ResizeMethod::Lanczos3,
        ] {
            let out = resize(&img, 13, 9, m).unwrap();
            assert_eq!(out.dims(), (13, 9));
            assert!(out.in_range());
        }
    }

    #[test]
    fn rescale_rounds_dimensions() {
        let img = checkerboard(10, 7);
        let out = rescale(&img, 0.5, ResizeMethod::Bilinear).unwrap();
        assert_eq!(out.dims(), (5, 4));
    }
}

//! Colour-space conversions over the planar RGB raster.
//!
//! Conventions (fixed so golden tests are stable):
//! - YCbCr: BT.601 full-range; Cb and Cr are stored offset by +0.5.
//! - LAB: sRGB with D65 white point and gamma linearization; stored as
//!   L/100 and (a|b)/256 + 0.5 so all planes stay in `[0, 1]`.
//! - HSV: standard hexcone; hue stored as fraction of a turn.
//!
//! All conversions run in 64-bit and store 32-bit samples.

use crate::error::Result;
use crate::raster::Image;

/// RGB -> YCbCr (BT.601 full-range, chroma offset +0.5).
pub fn to_ycbcr(img: &Image) -> Image {
    per_pixel(img, |r, g, b| {
        let y = 0.299 * r + 0.587 * g + 0.114 * b;
        let cb = (b - y) / 1.772 + 0.5;
        let cr = (r - y) / 1.402 + 0.5;
        (y, cb, cr)
    })
}

/// Inverse of [`to_ycbcr`]. Output clipped to `[0, 1]`.
pub fn from_ycbcr(img: &Image) -> Image {
    per_pixel(img, |y, cb, cr| {
        let r = y + 1.402 * (cr - 0.5);
        let b = y + 1.772 * (cb - 0.5);
        let g = (y - 0.299 * r - 0.114 * b) / 0.587;
        (r, g, b)
    })
}

/// RGB -> HSV (hexcone). Hue is stored as a fraction of a full turn.
pub fn to_hsv(img: &Image) -> Image {
    per_pixel(img, |r, g, b| {
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        let h = if delta == 0.0 {
            0.0
        } else if max == r {
            (((g - b) / delta).rem_euclid(6.0)) / 6.0
        } else if max == g {
            ((b - r) / delta + 2.0) / 6.0
        } else {
            ((r - g) / delta + 4.0) / 6.0
        };
        let s = if max == 0.0 { 0.0 } else { delta / max };
        (h, s, max)
    })
}

/// Inverse of [`to_hsv`].
pub fn from_hsv(img: &Image) -> Image {
    per_pixel(img, |h, s, v| {
        let h6 = (h * 6.0).rem_euclid(6.0);
        let c = v * s;
        let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
        let (r1, g1, b1) = match h6 as usize {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = v - c;
        (r1 + m, g1 + m, b1 + m)
    })
}

// D65 reference white for the sRGB -> XYZ matrix below.
const XN: f64 = 0.95047;
const YN: f64 = 1.0;
const ZN: f64 = 1.08883;

fn srgb_linearize(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_delinearize(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D {
        t * t * t
    } else {
        3.0 * D * D * (t - 4.0 / 29.0)
    }
}

/// RGB -> CIELAB (sRGB D65), encoded as (L/100, a/256+0.5, b/256+0.5).
pub fn to_lab(img: &Image) -> Image {
    per_pixel(img, |r, g, b| {
        let (rl, gl, bl) = (srgb_linearize(r), srgb_linearize(g), srgb_linearize(b));
        let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
        let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
        let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
        let (fx, fy, fz) = (lab_f(x / XN), lab_f(y / YN), lab_f(z / ZN));
        let l = 116.0 * fy - 16.0;
        let a = 500.0 * (fx - fy);
        let bb = 200.0 * (fy - fz);
        (l / 100.0, a / 256.0 + 0.5, bb / 256.0 + 0.5)
    })
}

/// Inverse of [`to_lab`]. Output clipped to `[0, 1]`.
pub fn from_lab(img: &Image) -> Image {
    per_pixel(img, |le, ae, be| {
        let l = le * 100.0;
        let a = (ae - 0.5) * 256.0;
        let b = (be - 0.5) * 256.0;
        let fy = (l + 16.0) / 116.0;
        let fx = fy + a / 500.0;
        let fz = fy - b / 200.0;
        let x = XN * lab_f_inv(fx);
        let y = YN * lab_f_inv(fy);
        let z = ZN * lab_f_inv(fz);
        let rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
        let gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
        let bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
        (
            srgb_delinearize(rl.max(0.0)),
            srgb_delinearize(gl.max(0.0)),
            srgb_delinearize(bl.max(0.0)),
        )
    })
}

fn per_pixel(img: &Image, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> Image {
    let (w, h) = img.dims();
    let mut out = Image::new(w, h).expect("same dims as valid input");
    let n = w * h;
    let (p0, p1, p2) = (img.plane(0), img.plane(1), img.plane(2));
    for i in 0..n {
        let (a, b, c) = f(p0[i] as f64, p1[i] as f64, p2[i] as f64);
        out.plane_mut(0)[i] = a.clamp(0.0, 1.0) as f32;
        out.plane_mut(1)[i] = b.clamp(0.0, 1.0) as f32;
        out.plane_mut(2)[i] = c.clamp(0.0, 1.0) as f32;
    }
    out
}

/// Round-trip helpers used by distortions that edit one plane in another
/// space: convert, let `edit` mutate the converted image, convert back.
pub fn edit_in_ycbcr(img: &Image, edit: impl FnOnce(&mut Image)) -> Image {
    let mut conv = to_ycbcr(img);
    edit(&mut conv);
    conv.clip_in_place();
    from_ycbcr(&conv)
}

pub fn edit_in_hsv(img: &Image, edit: impl FnOnce(&mut Image)) -> Image {
    let mut conv = to_hsv(img);
    edit(&mut conv);
    conv.clip_in_place();
    from_hsv(&conv)
}

pub fn edit_in_lab(img: &Image, edit: impl FnOnce(&mut Image)) -> Image {
    let mut conv = to_lab(img);
    edit(&mut conv);
    conv.clip_in_place();
    from_lab(&conv)
}

/// Result alias kept for signature parity with the rest of the crate.
pub type ColorResult = Result<Image>;

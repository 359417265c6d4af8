//! 2D filter kernels and spatial convolution with replicate borders.

use crate::error::{Error, Result};
use crate::raster::{Image, CHANNELS};

/// Odd-sized 2D filter kernel. Blur kernels produced by the factories below
/// are normalized to unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    /// Wrap raw weights. Dimensions must be odd and match the weight count.
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 == 0 || height % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel dimensions must be odd and positive, got {width}x{height}"
            )));
        }
        if weights.len() != width * height {
            return Err(Error::invalid("kernel weight count mismatch"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("kernel weights must be finite"));
        }
        Ok(Kernel2D {
            width,
            height,
            weights,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Scale weights so they sum to one.
    fn normalized(mut self) -> Self {
        let s = self.sum();
        if s != 0.0 {
            for w in &mut self.weights {
                *w /= s;
            }
        }
        self
    }
}

/// Isotropic Gaussian blur kernel with radius `ceil(3 sigma)`, unit sum.
pub fn make_gaussian_kernel(sigma: f64) -> Result<Kernel2D> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("gaussian sigma must be > 0"));
    }
    let r = (3.0 * sigma).ceil() as usize;
    let side = 2 * r + 1;
    let mut weights = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let dx = x as f64 - r as f64;
            let dy = y as f64 - r as f64;
            weights.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    Ok(Kernel2D::new(side, side, weights)?.normalized())
}

/// Straight-line kernel for motion blur: `length` taps along direction
/// `angle_deg`, unit sum. Angle 0 runs along the x axis.
pub fn make_line_kernel(length: usize, angle_deg: f64) -> Result<Kernel2D> {
    if length == 0 {
        return Err(Error::invalid("line kernel length must be > 0"));
    }
    let center = (length as f64 - 1.0) / 2.0;
    let half = center.ceil() as isize;
    let side = 2 * half as usize + 1;
    let mut weights = vec![0.0; side * side];
    let (dy, dx) = angle_deg.to_radians().sin_cos();
    for i in 0..length {
        let t = i as f64 - center;
        let x = (t * dx).round() as isize + half;
        let y = (t * dy).round() as isize + half;
        weights[y as usize * side + x as usize] += 1.0;
    }
    let k = Kernel2D::new(side, side, weights)?.normalized();
    Ok(trim_zero_border(k))
}

/// Circular (disk) kernel for lens blur: uniform weights inside the radius.
pub fn make_disk_kernel(radius: f64) -> Result<Kernel2D> {
    if !(radius > 0.0) {
        return Err(Error::invalid("disk radius must be > 0"));
    }
    let r = radius.ceil() as usize;
    let side = 2 * r + 1;
    let mut weights = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let dx = x as f64 - r as f64;
            let dy = y as f64 - r as f64;
            weights.push(if dx * dx + dy * dy <= radius * radius {
                1.0
            } else {
                0.0
            });
        }
    }
    Ok(Kernel2D::new(side, side, weights)?.normalized())
}

/// Uniform box kernel of odd side length, unit sum.
pub fn make_box_kernel(side: usize) -> Result<Kernel2D> {
    if side == 0 || side % 2 == 0 {
        return Err(Error::invalid("box kernel side must be odd"));
    }
    let w = 1.0 / (side * side) as f64;
    Kernel2D::new(side, side, vec![w; side * side])
}

/// Drop all-zero rows/columns at the kernel border, preserving oddness by
/// trimming symmetrically around the centre tap.
fn trim_zero_border(k: Kernel2D) -> Kernel2D {
    let cx = k.width / 2;
    let cy = k.height / 2;
    let mut rx = 0;
    let mut ry = 0;
    for y in 0..k.height {
        for x in 0..k.width {
            if k.weights[y * k.width + x] != 0.0 {
                rx = rx.max(x.abs_diff(cx));
                ry = ry.max(y.abs_diff(cy));
            }
        }
    }
    let (w, h) = (2 * rx + 1, 2 * ry + 1);
    if (w, h) == (k.width, k.height) {
        return k;
    }
    let mut weights = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            weights.push(k.weights[(cy - ry + y) * k.width + (cx - rx + x)]);
        }
    }
    Kernel2D::new(w, h, weights).expect("trimmed kernel keeps odd dims")
}

/// Spatial cross-correlation with replicate borders; 64-bit accumulation,
/// output clipped to `[0, 1]`.
pub fn convolve2d(img: &Image, k: &Kernel2D) -> Result<Image> {
    if k.width > img.width() || k.height > img.height() {
        return Err(Error::invalid(format!(
            "kernel {}x{} larger than image {}x{}",
            k.width,
            k.height,
            img.width(),
            img.height()
        )));
    }
    let (w, h) = img.dims();
    let rx = (k.width / 2) as isize;
    let ry = (k.height / 2) as isize;
    let mut out = Image::new(w, h)?;
    for c in 0..CHANNELS {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for ky in 0..k.height {
                    for kx in 0..k.width {
                        let sx = x as isize + kx as isize - rx;
                        let sy = y as isize + ky as isize - ry;
                        acc += k.weights[ky * k.width + kx]
                            * img.get_clamped(c, sx, sy) as f64;
                    }
                }
                out.set(c, x, y, acc.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(out)
}

/// Convolve a single plane in place (used by colour-plane distortions).
pub fn convolve_plane(plane: &[f32], w: usize, h: usize, k: &Kernel2D) -> Vec<f32> {
    let rx = (k.width / 2) as isize;
    let ry = (k.height / 2) as isize;
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f64;
            for ky in 0..k.height {
                for kx in 0..k.width {
                    let sx = (x as isize + kx as isize - rx).clamp(0, w as isize - 1) as usize;
                    let sy = (y as isize + ky as isize - ry).clamp(0, h as isize - 1) as usize;
                    acc += k.weights[ky * k.width + kx] * plane[sy * w + sx] as f64;
                }
            }
            out[y * w + x] = acc.clamp(0.0, 1.0) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Rect;

    /// Direct nested-loop reference, independent of the production path.
    fn convolve_reference(img: &Image, k: &Kernel2D) -> Image {
        let (w, h) = img.dims();
        let rx = (k.width() / 2) as isize;
        let ry = (k.height() / 2) as isize;
        let mut out = Image::new(w, h).unwrap();
        for c in 0..CHANNELS {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0f64;
                    for ky in -ry..=ry {
                        for kx in -rx..=rx {
                            let wgt =
                                k.weights()[((ky + ry) * k.width() as isize + kx + rx) as usize];
                            acc += wgt * img.get_clamped(c, x + kx, y + ky) as f64;
                        }
                    }
                    out.set(c, x as usize, y as usize, acc.clamp(0.0, 1.0) as f32);
                }
            }
        }
        out
    }

    fn ramp_image(w: usize, h: usize) -> Image {
        let mut img = Image::new(w, h).unwrap();
        for c in 0..CHANNELS {
            for y in 0..h {
                for x in 0..w {
                    img.set(c, x, y, ((x + y * w + c) % 10) as f32 / 10.0);
                }
            }
        }
        img
    }

    #[test]
    fn unit_sum_kernel_fixes_constants() {
        let img = Image::splat(8, 8, 0.5).unwrap();
        let k = make_gaussian_kernel(1.0).unwrap();
        let out = convolve2d(&img, &k).unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-6);
    }

    #[test]
    fn one_by_one_kernel_is_identity() {
        let img = ramp_image(6, 5);
        let k = Kernel2D::new(1, 1, vec![1.0]).unwrap();
        let out = convolve2d(&img, &k).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn box_kernel_matches_bruteforce_on_ramp() {
        let img = ramp_image(5, 5);
        let k = make_box_kernel(3).unwrap();
        let out = convolve2d(&img, &k).unwrap();
        let want = convolve_reference(&img, &k);
        assert!(out.max_abs_diff(&want).unwrap() < 1e-6);
    }

    #[test]
    fn convolution_matches_bruteforce_exhaustively() {
        // All image sizes up to 8x8 with kernels up to 5x5.
        for (iw, ih) in [(1, 1), (3, 2), (5, 5), (8, 3), (8, 8)] {
            let img = ramp_image(iw, ih);
            for (kw, kh) in [(1, 1), (3, 3), (1, 5), (5, 1), (5, 5), (3, 5)] {
                if kw > iw || kh > ih {
                    continue;
                }
                let weights: Vec<f64> =
                    (0..kw * kh).map(|i| ((i % 5) as f64 - 2.0) / 8.0).collect();
                let k = Kernel2D::new(kw, kh, weights).unwrap();
                let out = convolve2d(&img, &k).unwrap();
                let want = convolve_reference(&img, &k);
                assert!(
                    out.max_abs_diff(&want).unwrap() < 1e-6,
                    "mismatch at image {iw}x{ih} kernel {kw}x{kh}"
                );
            }
        }
    }

    #[test]
    fn kernel_larger_than_image_errors() {
        let img = Image::new(2, 2).unwrap();
        let k = make_box_kernel(3).unwrap();
        assert!(convolve2d(&img, &k).is_err());
    }

    #[test]
    fn even_kernel_dimensions_rejected() {
        assert!(Kernel2D::new(2, 3, vec![0.0; 6]).is_err());
    }

    #[test]
    fn gaussian_kernel_is_unit_sum_and_unimodal() {
        let k = make_gaussian_kernel(1.0).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-6);
        let center = k.weights()[(k.height() / 2) * k.width() + k.width() / 2];
        let max = k.weights().iter().cloned().fold(0.0, f64::max);
        assert_eq!(center, max);
    }

    #[test]
    fn line_kernel_axis_aligned() {
        let k = make_line_kernel(5, 0.0).unwrap();
        assert_eq!((k.width(), k.height()), (5, 1));
        assert!(k.weights().iter().all(|&w| (w - 0.2).abs() < 1e-12));

        let k90 = make_line_kernel(5, 90.0).unwrap();
        assert_eq!((k90.width(), k90.height()), (1, 5));
        assert!((k90.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disk_kernel_unit_sum_and_symmetric() {
        let k = make_disk_kernel(2.5).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-6);
        assert_eq!(k.width(), k.height());
        // Centre row and centre column mirror each other for a disk.
        let c = k.width() / 2;
        for i in 0..k.width() {
            assert_eq!(
                k.weights()[c * k.width() + i],
                k.weights()[i * k.width() + c]
            );
        }
    }

    #[test]
    fn crop_then_convolve_stays_in_range() {
        let img = ramp_image(12, 12);
        let sub = img.crop(Rect::new(1, 1, 8, 8)).unwrap();
        let out = convolve2d(&sub, &make_gaussian_kernel(0.8).unwrap()).unwrap();
        assert!(out.in_range());
    }
}

//! Procedural test images: gradients, plaid textures, band-limited noise,
//! geometric shapes and blends. Deterministic per seed; used by the self
//! tests, the evaluation fixtures and the browser demo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernel::{convolve2d, make_gaussian_kernel};
use crate::raster::{Image, CHANNELS};

/// Families of procedural content.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthFamily {
    Gradient,
    Plaid,
    BandNoise,
    Shapes,
    Blend,
}

const FAMILIES: [SynthFamily; 5] = [
    SynthFamily::Gradient,
    SynthFamily::Plaid,
    SynthFamily::BandNoise,
    SynthFamily::Shapes,
    SynthFamily::Blend,
];

/// One procedural image of the given family.
pub fn synth_image(family: SynthFamily, width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = match family {
        SynthFamily::Gradient => gradient(width, height, &mut rng),
        SynthFamily::Plaid => plaid(width, height, &mut rng),
        SynthFamily::BandNoise => band_noise(width, height, &mut rng),
        SynthFamily::Shapes => shapes(width, height, &mut rng),
        SynthFamily::Blend => {
            let a = gradient(width, height, &mut rng);
            let b = plaid(width, height, &mut rng);
            let c = band_noise(width, height, &mut rng);
            let d = shapes(width, height, &mut rng);
            let mut out = Image::new(width, height).unwrap();
            let imgs = [a, b, c, d];
            let mut ws = [0.0f32; 4];
            for w in &mut ws {
                *w = rng.gen_range(0.2..1.0);
            }
            let total: f32 = ws.iter().sum();
            for ch in 0..CHANNELS {
                for i in 0..width * height {
                    let v: f32 = imgs
                        .iter()
                        .zip(&ws)
                        .map(|(im, w)| im.plane(ch)[i] * w)
                        .sum();
                    out.plane_mut(ch)[i] = v / total;
                }
            }
            out
        }
    };
    // Keep headroom at both ends so additive distortions register in MSE.
    img.map(|v| 0.1 + 0.8 * v)
}

/// `n` images cycling through all families, seeded from `master_seed`.
pub fn synth_corpus(n: usize, width: usize, height: usize, master_seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    (0..n)
        .map(|i| {
            let family = FAMILIES[i % FAMILIES.len()];
            synth_image(family, width, height, rng.gen())
        })
        .collect()
}

fn gradient(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = angle.sin_cos();
    let lo: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let hi: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let diag = ((w * w + h * h) as f64).sqrt();
    let mut img = Image::new(w, h).unwrap();
    for y in 0..h {
        for x in 0..w {
            let t = (((x as f64 * dx + y as f64 * dy) / diag) + 0.5).clamp(0.0, 1.0) as f32;
            for c in 0..CHANNELS {
                img.set(c, x, y, lo[c] * (1.0 - t) + hi[c] * t);
            }
        }
    }
    img
}

fn plaid(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut img = Image::new(w, h).unwrap();
    // Two to four sinusoidal components per channel at random orientations.
    for c in 0..CHANNELS {
        let k = rng.gen_range(2..=4);
        let comps: Vec<(f64, f64, f64, f64)> = (0..k)
            .map(|_| {
                (
                    rng.gen_range(0.02..0.35),                 // frequency (cycles/px)
                    rng.gen_range(0.0..std::f64::consts::TAU), // orientation
                    rng.gen_range(0.0..std::f64::consts::TAU), // phase
                    rng.gen_range(0.3..1.0),                   // amplitude
                )
            })
            .collect();
        let norm: f64 = comps.iter().map(|c| c.3).sum();
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.0;
                for &(f, th, ph, a) in &comps {
                    let (s, co) = th.sin_cos();
                    let arg = std::f64::consts::TAU * f * (x as f64 * co + y as f64 * s) + ph;
                    v += a * arg.sin();
                }
                img.set(c, x, y, (0.5 + 0.5 * v / norm) as f32);
            }
        }
    }
    img
}

fn band_noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut img = Image::new(w, h).unwrap();
    for c in 0..CHANNELS {
        for i in 0..w * h {
            img.plane_mut(c)[i] = rng.gen();
        }
    }
    let sigma = rng.gen_range(0.6..2.0);
    let k = make_gaussian_kernel(sigma).unwrap();
    if k.width() <= w && k.height() <= h {
        // Re-stretch the blurred noise so it keeps usable contrast.
        let blurred = convolve2d(&img, &k).unwrap();
        let (lo, hi) = blurred
            .samples()
            .iter()
            .fold((1.0f32, 0.0f32), |(l, h), &v| (l.min(v), h.max(v)));
        let span = (hi - lo).max(1e-6);
        blurred.map(|v| (v - lo) / span)
    } else {
        img
    }
}

fn shapes(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    let bg: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let mut img = Image::new(w, h).unwrap();
    for c in 0..CHANNELS {
        img.plane_mut(c).fill(bg[c]);
    }
    let count = rng.gen_range(6..14);
    for _ in 0..count {
        let color: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let cx = rng.gen_range(0..w);
        let cy = rng.gen_range(0..h);
        let r = rng.gen_range(2..=(w.min(h) / 3).max(3));
        let disk = rng.gen_bool(0.5);
        let x0 = cx.saturating_sub(r);
        let x1 = (cx + r).min(w - 1);
        let y0 = cy.saturating_sub(r);
        let y1 = (cy + r).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as i64 - cx as i64;
                let dy = y as i64 - cy as i64;
                if !disk || (dx * dx + dy * dy) as usize <= r * r {
                    for c in 0..CHANNELS {
                        img.set(c, x, y, color[c]);
                    }
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_image(SynthFamily::Blend, 32, 24, 99);
        let b = synth_image(SynthFamily::Blend, 32, 24, 99);
        assert_eq!(a, b);
        let c = synth_image(SynthFamily::Blend, 32, 24, 100);
        assert!(a.max_abs_diff(&c).unwrap() > 1e-4);
    }

    #[test]
    fn corpus_cycles_families_and_stays_in_range() {
        let corpus = synth_corpus(10, 24, 16, 7);
        assert_eq!(corpus.len(), 10);
        for img in &corpus {
            assert_eq!(img.dims(), (24, 16));
            assert!(img.in_range());
        }
    }

    #[test]
    fn images_have_contrast() {
        for (i, img) in synth_corpus(5, 48, 48, 3).iter().enumerate() {
            let (lo, hi) = img
                .samples()
                .iter()
                .fold((1.0f32, 0.0f32), |(l, h), &v| (l.min(v), h.max(v)));
            assert!(hi - lo > 0.2, "image {i} too flat: [{lo}, {hi}]");
        }
    }
}

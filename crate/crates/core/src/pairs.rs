//! Pair pipeline: chunk construction, overlap-constrained crop sampling,
//! half-swapping and batch assembly.
//!
//! A chunk is a source image plus its n distorted variants, all cropped at
//! the same two locations. Pairing the a-th member of both crop stacks
//! yields same-quality positives (same distortion, overlapping crops);
//! every cross-index pairing is a different-quality negative. Swapping
//! query and key in half the pairs additionally exposes same-content,
//! different-distortion negatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distort::{apply, sample_specs, DistortionSpec, SeverityTable};
use crate::error::{Error, Result};
use crate::raster::{Image, Rect};
use crate::resample::{rescale, ResizeMethod};

/// A source image together with its distorted variants.
#[derive(Clone, Debug)]
pub struct Chunk {
    pub source: Image,
    pub distorted: Vec<Image>,
    pub specs: Vec<DistortionSpec>,
}

impl Chunk {
    /// Number of members including the pristine source.
    pub fn len(&self) -> usize {
        1 + self.distorted.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a chunk always contains at least the source
    }

    /// Member by augmentation index; 0 is the pristine source.
    pub fn member(&self, a: usize) -> &Image {
        if a == 0 {
            &self.source
        } else {
            &self.distorted[a - 1]
        }
    }
}

/// Minimum and maximum admissible crop-overlap fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OlaBounds {
    pub min_frac: f64,
    pub max_frac: f64,
}

impl OlaBounds {
    pub fn new(min_frac: f64, max_frac: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&min_frac)
            || !(0.0..=1.0).contains(&max_frac)
            || min_frac > max_frac
        {
            return Err(Error::invalid(format!(
                "overlap bounds must satisfy 0 <= min <= max <= 1, got [{min_frac}, {max_frac}]"
            )));
        }
        Ok(OlaBounds { min_frac, max_frac })
    }

    pub fn contains(&self, frac: f64) -> bool {
        frac >= self.min_frac && frac <= self.max_frac
    }
}

/// Pipeline configuration. Defaults match the reference setup, scaled for
/// desk use elsewhere via the config file.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub n_aug: usize,
    pub patch: usize,
    pub ola: OlaBounds,
    pub scales: Vec<f64>,
    pub max_crop_attempts: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_aug: 11,
            patch: 160,
            ola: OlaBounds {
                min_frac: 0.10,
                max_frac: 0.30,
            },
            scales: vec![1.0, 0.5],
            max_crop_attempts: 1000,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch < 32 {
            return Err(Error::invalid("patch must be >= 32"));
        }
        if self.scales.is_empty() {
            return Err(Error::invalid("scales must be non-empty"));
        }
        if self.n_aug == 0 || self.n_aug > 25 {
            return Err(Error::invalid("n_aug must be in 1..=25"));
        }
        if self.max_crop_attempts == 0 {
            return Err(Error::invalid("max_crop_attempts must be >= 1"));
        }
        OlaBounds::new(self.ola.min_frac, self.ola.max_frac).map(|_| ())
    }
}

/// Per-pair bookkeeping. Crop ids: the query comes from crop 1 and the key
/// from crop 2 unless `swapped`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMeta {
    pub chunk_id: usize,
    pub source_idx: usize,
    pub scale_idx: usize,
    /// Augmentation index within the chunk; 0 is the pristine member.
    pub aug_index: usize,
    pub crop1: Rect,
    pub crop2: Rect,
    pub swapped: bool,
}

impl PairMeta {
    pub fn query_crop_id(&self) -> u8 {
        if self.swapped {
            2
        } else {
            1
        }
    }

    pub fn key_crop_id(&self) -> u8 {
        if self.swapped {
            1
        } else {
            2
        }
    }
}

/// Aligned query/key lists. Positives are defined strictly by equal index;
/// every cross-index (query_i, key_j) with i != j is a negative.
#[derive(Clone, Debug, Default)]
pub struct PairBatch {
    pub queries: Vec<Image>,
    pub keys: Vec<Image>,
    pub meta: Vec<PairMeta>,
    /// Sources skipped because they were smaller than the patch at a scale.
    pub skipped_small: usize,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Eq. of chunk construction: `[src, apply(src, spec_1), ...]`.
pub fn build_chunk(
    src: &Image,
    specs: &[DistortionSpec],
    table: &SeverityTable,
) -> Result<Chunk> {
    let mut seen = std::collections::BTreeSet::new();
    for s in specs {
        if !seen.insert(s.kind) {
            return Err(Error::invalid(format!(
                "duplicate distortion kind {} in chunk specs",
                s.kind.name()
            )));
        }
    }
    let distorted = specs
        .iter()
        .map(|s| apply(src, s, table))
        .collect::<Result<Vec<_>>>()?;
    Ok(Chunk {
        source: src.clone(),
        distorted,
        specs: specs.to_vec(),
    })
}

/// Intersection area divided by the (shared) patch area.
pub fn overlap_fraction(a: &Rect, b: &Rect) -> Result<f64> {
    if a.w != b.w || a.h != b.h {
        return Err(Error::invalid("overlap_fraction requires equal-sized rects"));
    }
    Ok(a.intersection_area(b) as f64 / a.area() as f64)
}

/// Rejection-sample two patch-sized crops whose overlap fraction falls
/// within the configured bounds.
pub fn sample_ola_crops(
    rng: &mut impl Rng,
    img_w: usize,
    img_h: usize,
    cfg: &PipelineConfig,
) -> Result<(Rect, Rect)> {
    let p = cfg.patch;
    if img_w < p || img_h < p {
        return Err(Error::invalid(format!(
            "image {img_w}x{img_h} smaller than patch {p}"
        )));
    }
    let max_x = img_w - p;
    let max_y = img_h - p;
    for _ in 0..cfg.max_crop_attempts {
        let a = Rect::new(rng.gen_range(0..=max_x), rng.gen_range(0..=max_y), p, p);
        let b = Rect::new(rng.gen_range(0..=max_x), rng.gen_range(0..=max_y), p, p);
        let frac = overlap_fraction(&a, &b)?;
        if cfg.ola.contains(frac) {
            return Ok((a, b));
        }
    }
    Err(Error::SamplingExhausted {
        attempts: cfg.max_crop_attempts,
        context: format!(
            "no crop pair with overlap in [{}, {}] on {img_w}x{img_h} (patch {p})",
            cfg.ola.min_frac, cfg.ola.max_frac
        ),
    })
}

/// Crop every chunk member at the same location, preserving order.
pub fn crop_chunk(chunk: &Chunk, r: Rect) -> Result<Vec<Image>> {
    (0..chunk.len()).map(|a| chunk.member(a).crop(r)).collect()
}

/// Exchange query and key for every odd pair index, toggling the swapped
/// flag. Applying twice restores the input.
pub fn half_swap(
    queries: &mut Vec<Image>,
    keys: &mut Vec<Image>,
    meta: &mut [PairMeta],
) -> Result<()> {
    if queries.len() != keys.len() || queries.len() != meta.len() {
        return Err(Error::invalid("half_swap requires equal-length lists"));
    }
    for i in (1..queries.len()).step_by(2) {
        std::mem::swap(&mut queries[i], &mut keys[i]);
        meta[i].swapped = !meta[i].swapped;
    }
    Ok(())
}

/// Full batch assembly: per source and per scale, rescale, build a chunk,
/// sample one OLA-constrained crop pair, crop the chunk at both locations,
/// pair members index-wise, then half-swap the assembled batch.
///
/// Each source draws an independent sub-seed from `rng` up front, so the
/// per-source work is order-independent and could run concurrently; the
/// batch is assembled in source order either way.
pub fn make_batch(
    rng: &mut impl Rng,
    sources: &[Image],
    cfg: &PipelineConfig,
    table: &SeverityTable,
) -> Result<PairBatch> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::invalid("make_batch requires at least one source"));
    }
    let sub_seeds: Vec<u64> = sources.iter().map(|_| rng.gen()).collect();

    let mut batch = PairBatch::default();
    let mut chunk_id = 0usize;
    for (source_idx, (src, &seed)) in sources.iter().zip(&sub_seeds).enumerate() {
        let mut src_rng = ChaCha8Rng::seed_from_u64(seed);
        for (scale_idx, &scale) in cfg.scales.iter().enumerate() {
            let scaled = if scale == 1.0 {
                src.clone()
            } else {
                rescale(src, scale, ResizeMethod::Bilinear)?
            };
            if scaled.width() < cfg.patch || scaled.height() < cfg.patch {
                batch.skipped_small += 1;
                continue;
            }
            let specs = sample_specs(&mut src_rng, cfg.n_aug)?;
            let chunk = build_chunk(&scaled, &specs, table)?;
            let (c1, c2) =
                sample_ola_crops(&mut src_rng, scaled.width(), scaled.height(), cfg)?;
            let stack1 = crop_chunk(&chunk, c1)?;
            let stack2 = crop_chunk(&chunk, c2)?;
            for (a, (q, k)) in stack1.into_iter().zip(stack2).enumerate() {
                batch.queries.push(q);
                batch.keys.push(k);
                batch.meta.push(PairMeta {
                    chunk_id,
                    source_idx,
                    scale_idx,
                    aug_index: a,
                    crop1: c1,
                    crop2: c2,
                    swapped: false,
                });
            }
            chunk_id += 1;
        }
    }
    half_swap(&mut batch.queries, &mut batch.keys, &mut batch.meta)?;
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distort::DistortionKind;
    use crate::synth::{synth_image, SynthFamily};
    use sha2::{Digest, Sha256};

    fn table() -> SeverityTable {
        SeverityTable::builtin()
    }

    fn src(seed: u64, w: usize, h: usize) -> Image {
        synth_image(SynthFamily::Blend, w, h, seed)
    }

    fn digest_images(images: &[Image]) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for img in images {
            for v in img.samples() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    #[test]
    fn chunk_arity_matches_spec_count() {
        let img = src(1, 96, 96);
        let specs = vec![
            DistortionSpec::new(DistortionKind::GaussianBlur, 2, 1).unwrap(),
            DistortionSpec::new(DistortionKind::MeanShift, 1, 2).unwrap(),
        ];
        let chunk = build_chunk(&img, &specs, &table()).unwrap();
        assert_eq!(chunk.len(), 3);
        assert_eq!(chunk.member(0), &img);
    }

    #[test]
    fn empty_specs_degenerate_chunk() {
        let img = src(2, 64, 64);
        let chunk = build_chunk(&img, &[], &table()).unwrap();
        assert_eq!(chunk.len(), 1);
    }

    #[test]
    fn duplicate_kinds_rejected() {
        let img = src(3, 64, 64);
        let specs = vec![
            DistortionSpec::new(DistortionKind::Jitter, 1, 1).unwrap(),
            DistortionSpec::new(DistortionKind::Jitter, 4, 2).unwrap(),
        ];
        assert!(build_chunk(&img, &specs, &table()).is_err());
    }

    #[test]
    fn chunks_are_bit_identical_across_runs() {
        let img = src(4, 96, 96);
        let specs = vec![
            DistortionSpec::new(DistortionKind::WhiteNoiseRgb, 3, 42).unwrap(),
            DistortionSpec::new(DistortionKind::Jitter, 2, 43).unwrap(),
        ];
        let a = build_chunk(&img, &specs, &table()).unwrap();
        let b = build_chunk(&img, &specs, &table()).unwrap();
        assert_eq!(digest_images(&a.distorted), digest_images(&b.distorted));
    }

    #[test]
    fn overlap_fraction_basics() {
        let a = Rect::new(0, 0, 160, 160);
        assert_eq!(overlap_fraction(&a, &a).unwrap(), 1.0);
        let disjoint = Rect::new(200, 200, 160, 160);
        assert_eq!(overlap_fraction(&a, &disjoint).unwrap(), 0.0);
        let half = Rect::new(80, 0, 160, 160);
        assert_eq!(overlap_fraction(&a, &half).unwrap(), 0.5);
        let other = Rect::new(0, 0, 80, 160);
        assert!(overlap_fraction(&a, &other).is_err());
    }

    #[test]
    fn ola_sampler_respects_bounds() {
        let cfg = PipelineConfig {
            patch: 64,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let (a, b) = sample_ola_crops(&mut rng, 128, 96, &cfg).unwrap();
            let f = overlap_fraction(&a, &b).unwrap();
            assert!(cfg.ola.contains(f), "fraction {f} outside bounds");
            assert!(a.fits_in(128, 96) && b.fits_in(128, 96));
        }
    }

    #[test]
    fn exact_patch_image_with_full_overlap_bounds() {
        let cfg = PipelineConfig {
            patch: 64,
            ola: OlaBounds {
                min_frac: 1.0,
                max_frac: 1.0,
            },
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (a, b) = sample_ola_crops(&mut rng, 64, 64, &cfg).unwrap();
        assert_eq!(a, Rect::new(0, 0, 64, 64));
        assert_eq!(b, a);
    }

    #[test]
    fn infeasible_bounds_exhaust() {
        let cfg = PipelineConfig {
            patch: 64,
            ..Default::default()
        };
        // Exactly patch-sized image forces overlap 1.0, outside [0.1, 0.3].
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        match sample_ola_crops(&mut rng, 64, 64, &cfg) {
            Err(Error::SamplingExhausted { attempts, .. }) => {
                assert_eq!(attempts, cfg.max_crop_attempts)
            }
            other => panic!("expected SamplingExhausted, got {other:?}"),
        }
    }

    #[test]
    fn too_small_image_invalid() {
        let cfg = PipelineConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!(matches!(
            sample_ola_crops(&mut rng, 100, 100, &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn crop_chunk_is_elementwise() {
        let img = src(5, 96, 96);
        let specs = vec![DistortionSpec::new(DistortionKind::Darken, 3, 0).unwrap()];
        let chunk = build_chunk(&img, &specs, &table()).unwrap();
        let full = Rect::new(0, 0, 96, 96);
        let cropped = crop_chunk(&chunk, full).unwrap();
        assert_eq!(cropped[0], chunk.source);
        assert_eq!(cropped[1], chunk.distorted[0]);

        let r = Rect::new(10, 20, 40, 30);
        let cropped = crop_chunk(&chunk, r).unwrap();
        assert_eq!(cropped[0], chunk.source.crop(r).unwrap());
        assert_eq!(cropped[1], chunk.distorted[0].crop(r).unwrap());
    }

    fn tiny_batch(n: usize) -> (Vec<Image>, Vec<Image>, Vec<PairMeta>) {
        let queries: Vec<Image> = (0..n)
            .map(|i| Image::splat(4, 4, i as f32 / 10.0).unwrap())
            .collect();
        let keys: Vec<Image> = (0..n)
            .map(|i| Image::splat(4, 4, 0.5 + i as f32 / 20.0).unwrap())
            .collect();
        let meta: Vec<PairMeta> = (0..n)
            .map(|i| PairMeta {
                chunk_id: 0,
                source_idx: 0,
                scale_idx: 0,
                aug_index: i,
                crop1: Rect::new(0, 0, 4, 4),
                crop2: Rect::new(1, 0, 4, 4),
                swapped: false,
            })
            .collect();
        (queries, keys, meta)
    }

    #[test]
    fn half_swap_is_involution() {
        let (mut q, mut k, mut m) = tiny_batch(5);
        let (q0, k0, m0) = (q.clone(), k.clone(), m.clone());
        half_swap(&mut q, &mut k, &mut m).unwrap();
        assert_ne!(q, q0);
        half_swap(&mut q, &mut k, &mut m).unwrap();
        assert_eq!(q, q0);
        assert_eq!(k, k0);
        assert_eq!(m, m0);
    }

    #[test]
    fn half_swap_single_pair_unchanged() {
        let (mut q, mut k, mut m) = tiny_batch(1);
        let q0 = q.clone();
        half_swap(&mut q, &mut k, &mut m).unwrap();
        assert_eq!(q, q0);
        assert!(!m[0].swapped);
    }

    #[test]
    fn half_swap_batch_of_four_swaps_odd_indices() {
        let (mut q, mut k, mut m) = tiny_batch(4);
        let (q0, k0) = (q.clone(), k.clone());
        half_swap(&mut q, &mut k, &mut m).unwrap();
        for i in 0..4 {
            if i % 2 == 1 {
                assert_eq!(q[i], k0[i]);
                assert_eq!(k[i], q0[i]);
                assert!(m[i].swapped);
            } else {
                assert_eq!(q[i], q0[i]);
                assert!(!m[i].swapped);
            }
        }
    }

    #[test]
    fn half_swap_length_mismatch_errors() {
        let (mut q, mut k, mut m) = tiny_batch(3);
        k.pop();
        assert!(half_swap(&mut q, &mut k, &mut m).is_err());
    }

    #[test]
    fn batch_pair_count_one_source() {
        let cfg = PipelineConfig {
            n_aug: 2,
            patch: 48,
            scales: vec![1.0],
            ..Default::default()
        };
        let sources = vec![src(6, 96, 96)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = make_batch(&mut rng, &sources, &cfg, &table()).unwrap();
        assert_eq!(batch.len(), 3); // n + 1 pairs per chunk
    }

    #[test]
    fn batch_pair_count_two_sources_two_scales() {
        let cfg = PipelineConfig {
            n_aug: 11,
            patch: 48,
            scales: vec![1.0, 0.5],
            ..Default::default()
        };
        let sources = vec![src(7, 192, 192), src(8, 192, 192)];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let batch = make_batch(&mut rng, &sources, &cfg, &table()).unwrap();
        assert_eq!(batch.len(), 48); // 2 sources x 12 members x 2 scales
        assert_eq!(batch.skipped_small, 0);
    }

    #[test]
    fn batch_skips_small_sources() {
        let cfg = PipelineConfig {
            n_aug: 1,
            patch: 64,
            scales: vec![1.0, 0.5],
            ..Default::default()
        };
        // 96x96 supports patch 64 at scale 1.0 but not at 0.5 (48x48).
        let sources = vec![src(9, 96, 96)];
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let batch = make_batch(&mut rng, &sources, &cfg, &table()).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.skipped_small, 1);
    }

    #[test]
    fn batch_positives_share_chunk_and_augmentation() {
        let cfg = PipelineConfig {
            n_aug: 3,
            patch: 48,
            scales: vec![1.0, 0.5],
            ..Default::default()
        };
        let sources: Vec<Image> = (0..4).map(|i| src(20 + i, 192, 192)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let batch = make_batch(&mut rng, &sources, &cfg, &table()).unwrap();
        // Positives are same-index (query_i, key_i): crops overlap within
        // bounds, same chunk, same augmentation by construction of meta.
        for m in &batch.meta {
            let f = overlap_fraction(&m.crop1, &m.crop2).unwrap();
            assert!(cfg.ola.contains(f));
        }
        // Exactly floor(n/2) pairs swapped.
        let swapped = batch.meta.iter().filter(|m| m.swapped).count();
        assert_eq!(swapped, batch.len() / 2);
        // H3: within every chunk there is at least one (query from crop c,
        // key from the same crop c, different augmentation) negative.
        let max_chunk = batch.meta.iter().map(|m| m.chunk_id).max().unwrap();
        for chunk in 0..=max_chunk {
            let members: Vec<&PairMeta> =
                batch.meta.iter().filter(|m| m.chunk_id == chunk).collect();
            let h3 = members.iter().any(|a| {
                members.iter().any(|b| {
                    a.aug_index != b.aug_index && a.query_crop_id() == b.key_crop_id()
                })
            });
            assert!(h3, "chunk {chunk} has no same-content negative");
        }
    }

    #[test]
    fn batch_is_deterministic_under_seed() {
        let cfg = PipelineConfig {
            n_aug: 2,
            patch: 48,
            scales: vec![1.0],
            ..Default::default()
        };
        let sources: Vec<Image> = (0..3).map(|i| src(30 + i, 96, 96)).collect();
        let a = make_batch(&mut ChaCha8Rng::seed_from_u64(15), &sources, &cfg, &table()).unwrap();
        let b = make_batch(&mut ChaCha8Rng::seed_from_u64(15), &sources, &cfg, &table()).unwrap();
        assert_eq!(digest_images(&a.queries), digest_images(&b.queries));
        assert_eq!(digest_images(&a.keys), digest_images(&b.keys));
        assert_eq!(a.meta, b.meta);
    }

    #[test]
    fn empty_sources_rejected() {
        let cfg = PipelineConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        assert!(make_batch(&mut rng, &[], &cfg, &table()).is_err());
    }
}

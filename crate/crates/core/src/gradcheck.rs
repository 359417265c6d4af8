//! Finite-difference verification of the analytic backward pass.
//!
//! Builds a small encoder, a 4-pair batch of 32x32 images and a short
//! negative queue, then compares every parameter's analytic gradient of
//! the mean InfoNCE loss against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contrast::info_nce_batch;
use crate::error::Result;
use crate::nn::encoder::{EncoderConfig, EncoderState};
use crate::raster::Image;
use crate::synth::{synth_image, SynthFamily};

/// Outcome of one gradient-check run.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub params_checked: usize,
    pub per_seed_max: Vec<f64>,
    pub key_grads_zero: bool,
}

/// Relative error with a floor that keeps near-zero gradients from
/// amplifying finite-difference truncation noise.
fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3)
}

/// Check analytic gradients against central finite differences over
/// `seeds`, using 4-pair batches of 32x32 images. Returns the worst
/// relative error observed.
pub fn gradcheck(seeds: &[u64], eps: f64, tau: f64) -> Result<GradCheckReport> {
    let config = EncoderConfig::tiny(4);
    let mut per_seed_max = Vec::with_capacity(seeds.len());
    let mut params_checked = 0usize;
    let mut key_grads_zero = true;

    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = EncoderState::init(&config, rng.gen())?;
        let key = EncoderState::init(&config, rng.gen())?;

        let queries: Vec<Image> = (0..4)
            .map(|i| synth_image(SynthFamily::Blend, 32, 32, seed.wrapping_add(i)))
            .collect();
        let keys: Vec<Image> = (0..4)
            .map(|i| synth_image(SynthFamily::Plaid, 32, 32, seed.wrapping_add(100 + i)))
            .collect();
        let q_refs: Vec<&Image> = queries.iter().collect();
        let k_refs: Vec<&Image> = keys.iter().collect();
        let qx = online.batch_tensor(&q_refs)?;
        let kx = key.batch_tensor(&k_refs)?;
        // Fixed keys: the momentum encoder sees no gradient, so its output
        // is a constant of the optimization.
        let k_emb = key.forward_eval(&kx)?.embeddings;
        let queue: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let v: Vec<f64> = (0..config.embed_dim)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();

        // Analytic gradients.
        let mut work = online.clone();
        work.zero_grads();
        let (_, q_emb) = work.forward_train(&qx)?;
        let (_, d_q) = info_nce_batch(&q_emb, &k_emb, &queue, tau)?;
        work.backward(&d_q)?;
        let analytic = work.flat_grads();
        key_grads_zero &= key.flat_grads().iter().all(|&g| g == 0.0);

        let loss_at = |enc: &EncoderState| -> Result<f64> {
            let mut e = enc.clone();
            let (_, emb) = e.forward_train(&qx)?;
            Ok(info_nce_batch(&emb, &k_emb, &queue, tau)?.0)
        };

        let n = online.param_count();
        params_checked += n;
        let mut worst = 0.0f64;
        for i in 0..n {
            let orig = online.get_param(i);
            let mut plus = online.clone();
            plus.set_param(i, orig + eps);
            let mut minus = online.clone();
            minus.set_param(i, orig - eps);
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * eps);
            worst = worst.max(rel_err(analytic[i], fd));
        }
        per_seed_max.push(worst);
    }

    Ok(GradCheckReport {
        max_rel_err: per_seed_max.iter().cloned().fold(0.0, f64::max),
        params_checked,
        per_seed_max,
        key_grads_zero,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let report = gradcheck(&[1, 2], 1e-3, 0.2).unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "max relative error {}",
            report.max_rel_err
        );
        assert!(report.key_grads_zero);
        assert!(report.params_checked > 500);
    }
}

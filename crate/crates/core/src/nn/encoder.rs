//! The contrastive encoder: a stack of conv blocks (conv -> batchnorm ->
//! ReLU -> 2x2 average pool), global average pooling into the backbone
//! feature, and a 2-layer MLP head producing L2-normalized embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{
    AvgPool2, BatchNorm, Conv3x3, GlobalAvgPool, L2Normalize, Linear, Softplus, Tensor,
};
use crate::raster::{Image, CHANNELS};

/// Architecture hyper-parameters. The backbone feature dimension F equals
/// the last block's channel count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    /// Hidden width of the projection head.
    pub head_hidden: usize,
    /// Embedding dimension d of the projection head output.
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: vec![16, 32, 64, 128, 256],
            head_hidden: 512,
            embed_dim: 64,
        }
    }
}

impl EncoderConfig {
    /// Small configuration used by gradient checks and smoke tests.
    pub fn tiny(embed_dim: usize) -> Self {
        EncoderConfig {
            channels: vec![4, 6],
            head_hidden: 8,
            embed_dim,
        }
    }

    pub fn backbone_dim(&self) -> usize {
        *self.channels.last().expect("non-empty channels")
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::invalid("encoder needs at least one conv block"));
        }
        if self.head_hidden == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("head dimensions must be positive"));
        }
        Ok(())
    }

    /// Smallest admissible input side: each block halves the raster and the
    /// final map must be at least 1x1.
    pub fn min_input_side(&self) -> usize {
        1 << self.channels.len()
    }
}

#[derive(Clone, Debug)]
struct Block {
    conv: Conv3x3,
    bn: BatchNorm,
    act: Softplus,
    pool: AvgPool2,
}

/// Backbone plus projection head with explicit forward/backward.
#[derive(Clone, Debug)]
pub struct EncoderState {
    pub config: EncoderConfig,
    blocks: Vec<Block>,
    gap: GlobalAvgPool,
    fc1: Linear,
    head_act: Softplus,
    fc2: Linear,
    l2: L2Normalize,
    has_forward_cache: bool,
}

/// Eval-mode outputs: pooled backbone features and unit-norm embeddings.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub pooled: Tensor,
    pub embeddings: Tensor,
}

impl EncoderState {
    /// Deterministic seeded initialization.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        let mut in_ch = CHANNELS;
        for &out_ch in &config.channels {
            blocks.push(Block {
                conv: Conv3x3::new(in_ch, out_ch, &mut rng),
                bn: BatchNorm::new(out_ch),
                act: Softplus::new(),
                pool: AvgPool2::new(),
            });
            in_ch = out_ch;
        }
        let f = config.backbone_dim();
        Ok(EncoderState {
            config: config.clone(),
            blocks,
            gap: GlobalAvgPool::new(),
            fc1: Linear::new(f, config.head_hidden, &mut rng),
            head_act: Softplus::new(),
            fc2: Linear::new(config.head_hidden, config.embed_dim, &mut rng),
            l2: L2Normalize::new(),
            has_forward_cache: false,
        })
    }

    /// Stack images into an [N, 3, H, W] tensor. All images must share
    /// dimensions and be at least `min_input_side` on each axis.
    pub fn batch_tensor(&self, images: &[&Image]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::invalid("empty image batch"))?;
        let (w, h) = first.dims();
        let min = self.config.min_input_side();
        if w < min || h < min {
            return Err(Error::invalid(format!(
                "image {w}x{h} below encoder minimum {min}x{min}"
            )));
        }
        let mut data = Vec::with_capacity(images.len() * CHANNELS * w * h);
        for img in images {
            if img.dims() != (w, h) {
                return Err(Error::invalid("batch images must share dimensions"));
            }
            data.extend(img.samples().iter().map(|&v| v as f64));
        }
        Ok(Tensor {
            shape: vec![images.len(), CHANNELS, h, w],
            data,
        })
    }

    /// Training-mode forward with caches for backward. Returns pooled
    /// backbone features [N, F] and unit embeddings [N, d].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut cur = x.clone();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            cur = block.conv.forward(&cur, true);
            check_finite(&cur, i, "conv")?;
            cur = block.bn.forward(&cur, true);
            check_finite(&cur, i, "batchnorm")?;
            cur = block.act.forward(&cur, true);
            cur = block.pool.forward(&cur, true);
        }
        let pooled = self.gap.forward(&cur, true);
        let hidden = self.fc1.forward(&pooled, true);
        let hidden = self.head_act.forward(&hidden, true);
        let raw = self.fc2.forward(&hidden, true);
        check_finite(&raw, self.blocks.len(), "head")?;
        let embeddings = self.l2.forward(&raw, true)?;
        self.has_forward_cache = true;
        Ok((pooled, embeddings))
    }

    /// Inference-mode forward (running batch-norm statistics, no caches).
    /// Deterministic and side-effect free.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Encoded> {
        let mut cur = x.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            cur = block.conv.eval(&cur);
            check_finite(&cur, i, "conv")?;
            cur = block.bn.eval(&cur);
            check_finite(&cur, i, "batchnorm")?;
            cur = block.act.eval(&cur);
            cur = block.pool.eval(&cur);
        }
        let pooled = self.gap.eval(&cur);
        let hidden = self.fc1.eval(&pooled);
        let hidden = self.head_act.eval(&hidden);
        let raw = self.fc2.eval(&hidden);
        check_finite(&raw, self.blocks.len(), "head")?;
        let embeddings = self.l2.eval(&raw)?;
        Ok(Encoded { pooled, embeddings })
    }

    /// Backward from embedding gradients through the whole stack,
    /// accumulating parameter gradients. Input gradients are discarded.
    pub fn backward(&mut self, d_embeddings: &Tensor) -> Result<()> {
        if !self.has_forward_cache {
            return Err(Error::StateError(
                "backward called without a cached forward pass".into(),
            ));
        }
        let mut grad = self.l2.backward(d_embeddings)?;
        grad = self.fc2.backward(&grad)?;
        grad = self.head_act.backward(&grad)?;
        grad = self.fc1.backward(&grad)?;
        grad = self.gap.backward(&grad)?;
        for block in self.blocks.iter_mut().rev() {
            grad = block.pool.backward(&grad)?;
            grad = block.act.backward(&grad)?;
            grad = block.bn.backward(&grad)?;
            grad = block.conv.backward(&grad)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(|_, _, grad, _| grad.fill(0.0));
    }

    /// Plain SGD with momentum on every parameter tensor.
    pub fn sgd_step(&mut self, lr: f64, momentum: f64) {
        self.visit_params_mut(|_, param, grad, velocity| {
            for i in 0..param.len() {
                velocity.data[i] = momentum * velocity.data[i] + grad.data[i];
                param.data[i] -= lr * velocity.data[i];
            }
        });
    }

    /// Elementwise `theta_k <- m * theta_k + (1 - m) * theta_q`.
    pub fn momentum_update_from(&mut self, online: &EncoderState, m: f64) -> Result<()> {
        if !(0.0..1.0).contains(&m) {
            return Err(Error::invalid(format!("momentum m={m} outside [0, 1)")));
        }
        let mut theirs = Vec::new();
        online.visit_params(|name, t| theirs.push((name, t.clone())));
        let mut idx = 0;
        let mut err = None;
        self.visit_params_mut(|name, param, _, _| {
            if err.is_some() {
                return;
            }
            let (other_name, other) = &theirs[idx];
            if *other_name != name || other.shape != param.shape {
                err = Some(Error::invalid(format!(
                    "parameter mismatch at {name} vs {other_name}"
                )));
                return;
            }
            for i in 0..param.len() {
                param.data[i] = m * param.data[i] + (1.0 - m) * other.data[i];
            }
            idx += 1;
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Visit (name, param) pairs in a stable order.
    pub fn visit_params(&self, mut f: impl FnMut(String, &Tensor)) {
        for (i, b) in self.blocks.iter().enumerate() {
            f(format!("block{i}.conv.weight"), &b.conv.weight);
            f(format!("block{i}.conv.bias"), &b.conv.bias);
            f(format!("block{i}.bn.gamma"), &b.bn.gamma);
            f(format!("block{i}.bn.beta"), &b.bn.beta);
        }
        f("head.fc1.weight".into(), &self.fc1.weight);
        f("head.fc1.bias".into(), &self.fc1.bias);
        f("head.fc2.weight".into(), &self.fc2.weight);
        f("head.fc2.bias".into(), &self.fc2.bias);
    }

    /// Visit (name, param, grad, velocity) mutably in the same order as
    /// [`EncoderState::visit_params`].
    fn visit_params_mut(&mut self, mut f: impl FnMut(String, &mut Tensor, &mut Tensor, &mut Tensor)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(
                format!("block{i}.conv.weight"),
                &mut b.conv.weight,
                &mut b.conv.grad_weight,
                &mut b.conv.vel_weight,
            );
            f(
                format!("block{i}.conv.bias"),
                &mut b.conv.bias,
                &mut b.conv.grad_bias,
                &mut b.conv.vel_bias,
            );
            f(
                format!("block{i}.bn.gamma"),
                &mut b.bn.gamma,
                &mut b.bn.grad_gamma,
                &mut b.bn.vel_gamma,
            );
            f(
                format!("block{i}.bn.beta"),
                &mut b.bn.beta,
                &mut b.bn.grad_beta,
                &mut b.bn.vel_beta,
            );
        }
        f(
            "head.fc1.weight".into(),
            &mut self.fc1.weight,
            &mut self.fc1.grad_weight,
            &mut self.fc1.vel_weight,
        );
        f(
            "head.fc1.bias".into(),
            &mut self.fc1.bias,
            &mut self.fc1.grad_bias,
            &mut self.fc1.vel_bias,
        );
        f(
            "head.fc2.weight".into(),
            &mut self.fc2.weight,
            &mut self.fc2.grad_weight,
            &mut self.fc2.vel_weight,
        );
        f(
            "head.fc2.bias".into(),
            &mut self.fc2.bias,
            &mut self.fc2.grad_bias,
            &mut self.fc2.vel_bias,
        );
    }

    /// Mutable parameter access for checkpoint loading.
    pub(crate) fn visit_params_mut_public(&mut self, mut f: impl FnMut(String, &mut Tensor)) {
        self.visit_params_mut(|name, param, _, _| f(name, param));
    }

    /// Running batch-norm statistics, named, in a stable order.
    pub fn visit_stats(&self, mut f: impl FnMut(String, &Tensor)) {
        for (i, b) in self.blocks.iter().enumerate() {
            f(format!("block{i}.bn.running_mean"), &b.bn.running_mean);
            f(format!("block{i}.bn.running_var"), &b.bn.running_var);
        }
    }

    pub fn visit_stats_mut(&mut self, mut f: impl FnMut(String, &mut Tensor)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(format!("block{i}.bn.running_mean"), &mut b.bn.running_mean);
            f(format!("block{i}.bn.running_var"), &mut b.bn.running_var);
        }
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(|_, t| n += t.len());
        n
    }

    /// Flat parameter access for finite-difference checks.
    pub fn get_param(&self, flat_idx: usize) -> f64 {
        let mut remaining = flat_idx;
        let mut out = None;
        self.visit_params(|_, t| {
            if out.is_none() {
                if remaining < t.len() {
                    out = Some(t.data[remaining]);
                } else {
                    remaining -= t.len();
                }
            }
        });
        out.expect("flat index in range")
    }

    pub fn set_param(&mut self, flat_idx: usize, v: f64) {
        let mut remaining = flat_idx;
        let mut done = false;
        self.visit_params_mut(|_, t, _, _| {
            if !done {
                if remaining < t.len() {
                    t.data[remaining] = v;
                    done = true;
                } else {
                    remaining -= t.len();
                }
            }
        });
        assert!(done, "flat index in range");
    }

    /// Flattened gradients in visit order.
    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_grads(|_, g| out.extend_from_slice(&g.data));
        out
    }

    fn visit_grads(&self, mut f: impl FnMut(String, &Tensor)) {
        for (i, b) in self.blocks.iter().enumerate() {
            f(format!("block{i}.conv.weight"), &b.conv.grad_weight);
            f(format!("block{i}.conv.bias"), &b.conv.grad_bias);
            f(format!("block{i}.bn.gamma"), &b.bn.grad_gamma);
            f(format!("block{i}.bn.beta"), &b.bn.grad_beta);
        }
        f("head.fc1.weight".into(), &self.fc1.grad_weight);
        f("head.fc1.bias".into(), &self.fc1.grad_bias);
        f("head.fc2.weight".into(), &self.fc2.grad_weight);
        f("head.fc2.bias".into(), &self.fc2.grad_bias);
    }
}

/// Spec-facing encode: inference mode over an image batch. Returns pooled
/// backbone features and L2-normalized projections.
pub fn encode(state: &EncoderState, images: &[&Image]) -> Result<Encoded> {
    let x = state.batch_tensor(images)?;
    state.forward_eval(&x)
}

fn check_finite(t: &Tensor, layer: usize, what: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NumericFailure(format!(
            "non-finite activation after {what} in layer {layer}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_image, SynthFamily};

    fn images(n: usize, side: usize) -> Vec<Image> {
        (0..n)
            .map(|i| synth_image(SynthFamily::Blend, side, side, 50 + i as u64))
            .collect()
    }

    #[test]
    fn projections_are_unit_norm() {
        let enc = EncoderState::init(&EncoderConfig::tiny(4), 1).unwrap();
        let imgs = images(3, 16);
        let refs: Vec<&Image> = imgs.iter().collect();
        let out = encode(&enc, &refs).unwrap();
        assert_eq!(out.embeddings.shape, vec![3, 4]);
        for b in 0..3 {
            let norm: f64 = out.embeddings.data[b * 4..(b + 1) * 4]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn duplicate_images_give_identical_rows() {
        let enc = EncoderState::init(&EncoderConfig::tiny(4), 2).unwrap();
        let img = images(1, 16).pop().unwrap();
        let refs = vec![&img, &img];
        let out = encode(&enc, &refs).unwrap();
        let d = enc.config.embed_dim;
        assert_eq!(out.embeddings.data[..d], out.embeddings.data[d..2 * d]);
        let f = enc.config.backbone_dim();
        assert_eq!(out.pooled.data[..f], out.pooled.data[f..2 * f]);
    }

    #[test]
    fn zero_image_through_zeroed_head_is_degenerate() {
        let mut enc = EncoderState::init(&EncoderConfig::tiny(4), 3).unwrap();
        // Zero the whole head: fc2 output becomes exactly zero.
        enc.fc2.weight.fill(0.0);
        enc.fc2.bias.fill(0.0);
        let img = Image::new(16, 16).unwrap();
        let refs = vec![&img];
        match encode(&enc, &refs) {
            Err(Error::NumericFailure(msg)) => assert!(msg.contains("degenerate")),
            other => panic!("expected degenerate-norm failure, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_batch_dims_rejected() {
        let enc = EncoderState::init(&EncoderConfig::tiny(4), 4).unwrap();
        let a = Image::splat(16, 16, 0.2).unwrap();
        let b = Image::splat(18, 16, 0.2).unwrap();
        assert!(encode(&enc, &[&a, &b]).is_err());
        let tiny = Image::splat(2, 2, 0.2).unwrap();
        assert!(encode(&enc, &[&tiny]).is_err());
    }

    #[test]
    fn eval_matches_itself_and_is_pure() {
        let enc = EncoderState::init(&EncoderConfig::tiny(6), 5).unwrap();
        let imgs = images(2, 16);
        let refs: Vec<&Image> = imgs.iter().collect();
        let a = encode(&enc, &refs).unwrap();
        let b = encode(&enc, &refs).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.pooled, b.pooled);
    }

    #[test]
    fn momentum_update_m0_copies_online() {
        let online = EncoderState::init(&EncoderConfig::tiny(4), 6).unwrap();
        let mut key = EncoderState::init(&EncoderConfig::tiny(4), 7).unwrap();
        key.momentum_update_from(&online, 0.0).unwrap();
        let mut same = true;
        let mut theirs = Vec::new();
        online.visit_params(|_, t| theirs.push(t.clone()));
        let mut i = 0;
        key.visit_params(|_, t| {
            if t != &theirs[i] {
                same = false;
            }
            i += 1;
        });
        assert!(same);
    }

    #[test]
    fn momentum_update_arithmetic() {
        let cfg = EncoderConfig::tiny(4);
        let mut key = EncoderState::init(&cfg, 8).unwrap();
        let mut online = EncoderState::init(&cfg, 9).unwrap();
        // theta_k = 0, theta_q = 1, m = 0.999 -> 0.001 everywhere.
        key.visit_params_mut(|_, t, _, _| t.fill(0.0));
        online.visit_params_mut(|_, t, _, _| t.fill(1.0));
        key.momentum_update_from(&online, 0.999).unwrap();
        key.visit_params(|name, t| {
            for v in &t.data {
                assert!((v - 0.001).abs() < 1e-15, "{name}: {v}");
            }
        });
        // Fixed point: theta_k == theta_q stays put.
        let before = {
            let mut v = Vec::new();
            online.visit_params(|_, t| v.push(t.clone()));
            v
        };
        let mut online2 = online.clone();
        online2.momentum_update_from(&online, 0.5).unwrap();
        let mut i = 0;
        online2.visit_params(|_, t| {
            assert_eq!(t, &before[i]);
            i += 1;
        });
    }

    #[test]
    fn momentum_update_shape_mismatch_errors() {
        let mut key = EncoderState::init(&EncoderConfig::tiny(4), 10).unwrap();
        let other = EncoderState::init(&EncoderConfig::tiny(6), 11).unwrap();
        assert!(key.momentum_update_from(&other, 0.5).is_err());
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut enc = EncoderState::init(&EncoderConfig::tiny(4), 12).unwrap();
        let dy = Tensor::zeros(&[1, 4]);
        assert!(matches!(enc.backward(&dy), Err(Error::StateError(_))));
    }

    #[test]
    fn flat_param_round_trip() {
        let mut enc = EncoderState::init(&EncoderConfig::tiny(4), 13).unwrap();
        let n = enc.param_count();
        assert!(n > 0);
        let orig = enc.get_param(n - 1);
        enc.set_param(n - 1, orig + 1.5);
        assert!((enc.get_param(n - 1) - orig - 1.5).abs() < 1e-15);
    }
}

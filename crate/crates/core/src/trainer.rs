//! Momentum-contrast training loop.
//!
//! Per step: forward the online encoder on queries and the key encoder on
//! keys, compute the mean InfoNCE loss against in-batch plus queued
//! negatives, backpropagate through the online encoder only, take an SGD
//! step at the cosine-annealed rate, momentum-update the key encoder, and
//! enqueue the batch keys. Fully deterministic under the config seed when
//! run single-threaded.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contrast::{info_nce_batch, lr_at, momentum_update, NegativeQueue};
use crate::distort::SeverityTable;
use crate::error::{Error, Result};
use crate::nn::encoder::{EncoderConfig, EncoderState};
use crate::pairs::{make_batch, PairBatch, PairMeta, PipelineConfig};
use crate::raster::{Image, Rect};
use crate::resample::{resize, ResizeMethod};

/// Which positive-pair source the trainer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Distortion chunks with OLA crops and half-swap.
    Quality,
    /// Two random resized crops of one image.
    Content,
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::Quality => "quality",
            TrainMode::Content => "content",
        }
    }

    pub fn from_name(s: &str) -> Option<TrainMode> {
        match s {
            "quality" => Some(TrainMode::Quality),
            "content" => Some(TrainMode::Content),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub tau: f64,
    /// Key-encoder momentum coefficient m.
    pub momentum: f64,
    /// Pairs per optimization step (approximate granularity: whole sources).
    pub batch_pairs: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub queue_capacity: usize,
    /// SGD velocity momentum (distinct from the key-encoder m).
    pub sgd_momentum: f64,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.6,
            epochs: 25,
            tau: 0.2,
            momentum: 0.999,
            batch_pairs: 128,
            seed: 0,
            mode: TrainMode::Quality,
            queue_capacity: 512,
            sgd_momentum: 0.9,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::invalid("tau must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum m must be in [0, 1)"));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::invalid("lr0 must be > 0"));
        }
        if self.epochs == 0 || self.batch_pairs == 0 {
            return Err(Error::invalid("epochs and batch_pairs must be >= 1"));
        }
        self.encoder.validate()
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub queue_fill: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub online: EncoderState,
    pub key: EncoderState,
    pub log: Vec<StepRecord>,
    pub skipped_small: usize,
}

/// Train on an in-memory corpus.
pub fn train(
    sources: &[Image],
    pcfg: &PipelineConfig,
    tcfg: &TrainConfig,
    table: &SeverityTable,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    pcfg.validate()?;
    if sources.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if pcfg.patch < tcfg.encoder.min_input_side() {
        return Err(Error::invalid(format!(
            "patch {} below encoder minimum input {}",
            pcfg.patch,
            tcfg.encoder.min_input_side()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut online = EncoderState::init(&tcfg.encoder, rng.gen())?;
    let mut key = online.clone();
    let mut queue = NegativeQueue::new(tcfg.queue_capacity, tcfg.encoder.embed_dim);

    let pairs_per_source = match tcfg.mode {
        TrainMode::Quality => (pcfg.n_aug + 1) * pcfg.scales.len(),
        TrainMode::Content => 1,
    };
    let group_size = (tcfg.batch_pairs / pairs_per_source).max(1);
    let steps_per_epoch = sources.len().div_ceil(group_size);
    let total_steps = tcfg.epochs * steps_per_epoch;

    let mut log = Vec::with_capacity(total_steps);
    let mut skipped_small = 0usize;
    let mut step = 0usize;
    for _epoch in 0..tcfg.epochs {
        let mut order: Vec<usize> = (0..sources.len()).collect();
        order.shuffle(&mut rng);
        for group in order.chunks(group_size) {
            let group_images: Vec<Image> =
                group.iter().map(|&i| sources[i].clone()).collect();
            let batch = match tcfg.mode {
                TrainMode::Quality => make_batch(&mut rng, &group_images, pcfg, table)?,
                TrainMode::Content => content_batch(&mut rng, &group_images, pcfg)?,
            };
            skipped_small += batch.skipped_small;
            if batch.is_empty() {
                continue;
            }
            let record = train_step(
                &mut online,
                &mut key,
                &mut queue,
                &batch,
                tcfg,
                step,
                total_steps,
            )?;
            log.push(record);
            step += 1;
        }
    }
    Ok(TrainOutcome {
        online,
        key,
        log,
        skipped_small,
    })
}

/// One optimization step over a prepared batch.
pub fn train_step(
    online: &mut EncoderState,
    key: &mut EncoderState,
    queue: &mut NegativeQueue,
    batch: &PairBatch,
    tcfg: &TrainConfig,
    step: usize,
    total_steps: usize,
) -> Result<StepRecord> {
    let q_refs: Vec<&Image> = batch.queries.iter().collect();
    let k_refs: Vec<&Image> = batch.keys.iter().collect();
    let qx = online.batch_tensor(&q_refs)?;
    let kx = key.batch_tensor(&k_refs)?;

    let (_, q_emb) = online.forward_train(&qx)?;
    // Key encoder: training-mode statistics, but no gradient ever flows.
    let (_, k_emb) = key.forward_train(&kx)?;

    let (loss, d_q) = info_nce_batch(&q_emb, &k_emb, &queue.snapshot(), tcfg.tau)?;
    online.zero_grads();
    online.backward(&d_q)?;
    let lr = lr_at(step, total_steps.max(1), tcfg.lr0)?;
    online.sgd_step(lr, tcfg.sgd_momentum);
    momentum_update(key, online, tcfg.momentum)?;
    queue.push(&k_emb)?;

    Ok(StepRecord {
        step,
        lr,
        loss,
        queue_fill: queue.len(),
    })
}

/// Content-mode batch: two independent random resized crops per source.
pub fn content_batch(
    rng: &mut impl Rng,
    sources: &[Image],
    pcfg: &PipelineConfig,
) -> Result<PairBatch> {
    if sources.is_empty() {
        return Err(Error::invalid("content_batch requires sources"));
    }
    let mut batch = PairBatch::default();
    for (source_idx, src) in sources.iter().enumerate() {
        let (w, h) = src.dims();
        if w < pcfg.patch || h < pcfg.patch {
            batch.skipped_small += 1;
            continue;
        }
        let crop_one = |rng: &mut dyn rand::RngCore| -> Result<(Image, Rect)> {
            let max_side = w.min(h);
            let lo = ((max_side as f64 * 0.6).floor() as usize).clamp(pcfg.patch.min(max_side), max_side);
            let side = if lo >= max_side {
                max_side
            } else {
                rng.gen_range(lo..=max_side)
            };
            let x = rng.gen_range(0..=w - side);
            let y = rng.gen_range(0..=h - side);
            let rect = Rect::new(x, y, side, side);
            let mut img = resize(&src.crop(rect)?, pcfg.patch, pcfg.patch, ResizeMethod::Bilinear)?;
            if rng.gen_bool(0.5) {
                img = img.flip_horizontal();
            }
            Ok((img, rect))
        };
        let (q, c1) = crop_one(rng)?;
        let (k, c2) = crop_one(rng)?;
        batch.queries.push(q);
        batch.keys.push(k);
        batch.meta.push(PairMeta {
            chunk_id: source_idx,
            source_idx,
            scale_idx: 0,
            aug_index: 0,
            crop1: c1,
            crop2: c2,
            swapped: false,
        });
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::checkpoint;
    use crate::pairs::OlaBounds;
    use crate::synth::synth_corpus;

    fn small_setup() -> (Vec<Image>, PipelineConfig, TrainConfig, SeverityTable) {
        let sources = synth_corpus(6, 72, 72, 11);
        let pcfg = PipelineConfig {
            n_aug: 2,
            patch: 32,
            ola: OlaBounds {
                min_frac: 0.1,
                max_frac: 0.5,
            },
            scales: vec![1.0],
            max_crop_attempts: 1000,
        };
        let tcfg = TrainConfig {
            epochs: 2,
            batch_pairs: 9,
            seed: 99,
            lr0: 0.05,
            queue_capacity: 16,
            encoder: EncoderConfig {
                channels: vec![4, 8],
                head_hidden: 8,
                embed_dim: 4,
            },
            ..Default::default()
        };
        (sources, pcfg, tcfg, SeverityTable::builtin())
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let (sources, pcfg, tcfg, table) = small_setup();
        let a = train(&sources, &pcfg, &tcfg, &table).unwrap();
        let b = train(&sources, &pcfg, &tcfg, &table).unwrap();
        let bytes_a = checkpoint::to_bytes(&a.online, &[0u8; 32]);
        let bytes_b = checkpoint::to_bytes(&b.online, &[0u8; 32]);
        assert_eq!(bytes_a, bytes_b);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn m_zero_keeps_key_equal_to_online() {
        let (sources, pcfg, mut tcfg, table) = small_setup();
        tcfg.momentum = 0.0;
        tcfg.epochs = 1;
        let out = train(&sources, &pcfg, &tcfg, &table).unwrap();
        let ka = checkpoint::to_bytes(&out.key, &[0u8; 32]);
        let oa = checkpoint::to_bytes(&out.online, &[0u8; 32]);
        // Parameters match exactly; running stats differ (per-encoder), so
        // compare parameter tensors only.
        let mut same = true;
        let mut online_params = Vec::new();
        out.online.visit_params(|_, t| online_params.push(t.clone()));
        let mut i = 0;
        out.key.visit_params(|_, t| {
            if t != &online_params[i] {
                same = false;
            }
            i += 1;
        });
        assert!(same, "key parameters diverged from online with m=0");
        // Sanity: the serialized forms exist and differ only via BN stats.
        assert_eq!(ka.len(), oa.len());
    }

    #[test]
    fn loss_is_logged_and_queue_fills() {
        let (sources, pcfg, tcfg, table) = small_setup();
        let out = train(&sources, &pcfg, &tcfg, &table).unwrap();
        assert!(!out.log.is_empty());
        for rec in &out.log {
            assert!(rec.loss.is_finite() && rec.loss >= 0.0);
        }
        assert!(out.log.last().unwrap().queue_fill > 0);
        // lr follows the cosine schedule start.
        assert!((out.log[0].lr - tcfg.lr0).abs() < 1e-12);
    }

    #[test]
    fn content_mode_trains() {
        let (sources, pcfg, mut tcfg, table) = small_setup();
        tcfg.mode = TrainMode::Content;
        tcfg.epochs = 1;
        let out = train(&sources, &pcfg, &tcfg, &table).unwrap();
        assert!(!out.log.is_empty());
    }

    #[test]
    fn descent_on_a_fixed_batch() {
        // One SGD step with a small lr decreases the loss on the same batch
        // for at least 9 of 10 seeds.
        let table = SeverityTable::builtin();
        let pcfg = PipelineConfig {
            n_aug: 1,
            patch: 32,
            ola: OlaBounds {
                min_frac: 0.1,
                max_frac: 0.5,
            },
            scales: vec![1.0],
            max_crop_attempts: 1000,
        };
        let sources = synth_corpus(4, 72, 72, 21);
        let mut wins = 0;
        for seed in 0..10u64 {
            let tcfg = TrainConfig {
                seed,
                lr0: 0.01,
                sgd_momentum: 0.0,
                queue_capacity: 8,
                encoder: EncoderConfig {
                    channels: vec![4, 8],
                    head_hidden: 8,
                    embed_dim: 4,
                },
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut online = EncoderState::init(&tcfg.encoder, rng.gen()).unwrap();
            let mut key = online.clone();
            let mut queue = NegativeQueue::new(8, 4);
            let batch = make_batch(&mut rng, &sources, &pcfg, &table).unwrap();
            let before = eval_loss(&online, &key, &queue, &batch, tcfg.tau);
            train_step(&mut online, &mut key, &mut queue, &batch, &tcfg, 0, 100).unwrap();
            // Fresh queue contents now exist; evaluate with an empty queue
            // again for a like-for-like comparison.
            let after = eval_loss(&online, &key, &NegativeQueue::new(8, 4), &batch, tcfg.tau);
            if after < before {
                wins += 1;
            }
        }
        assert!(wins >= 9, "descent in only {wins}/10 seeds");
    }

    fn eval_loss(
        online: &EncoderState,
        key: &EncoderState,
        queue: &NegativeQueue,
        batch: &PairBatch,
        tau: f64,
    ) -> f64 {
        let q_refs: Vec<&Image> = batch.queries.iter().collect();
        let k_refs: Vec<&Image> = batch.keys.iter().collect();
        let mut online = online.clone();
        let mut key = key.clone();
        let qx = online.batch_tensor(&q_refs).unwrap();
        let kx = key.batch_tensor(&k_refs).unwrap();
        let (_, q_emb) = online.forward_train(&qx).unwrap();
        let (_, k_emb) = key.forward_train(&kx).unwrap();
        info_nce_batch(&q_emb, &k_emb, &queue.snapshot(), tau)
            .unwrap()
            .0
    }
}

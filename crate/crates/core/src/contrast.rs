//! Contrastive-learning primitives: the InfoNCE loss (stabilized by max
//! subtraction), its analytic gradient with respect to the query
//! embeddings, the FIFO negative queue, the key-encoder momentum update
//! and the cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::nn::encoder::EncoderState;
use crate::nn::Tensor;

/// InfoNCE for one query: `-log(exp(q.k+/t) / (exp(q.k+/t) + sum exp(q.k-/t)))`.
///
/// All vectors must be unit-norm and share a dimension. Computed with max
/// subtraction so large `1/t` stays finite.
pub fn info_nce_loss(q: &[f64], k_pos: &[f64], negs: &[Vec<f64>], tau: f64) -> Result<f64> {
    if q.is_empty() {
        return Err(Error::invalid("empty query vector"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("temperature must be > 0"));
    }
    if q.len() != k_pos.len() || negs.iter().any(|n| n.len() != q.len()) {
        return Err(Error::invalid("mismatched embedding dimensions"));
    }
    let mut logits = Vec::with_capacity(1 + negs.len());
    logits.push(dot(q, k_pos) / tau);
    for n in negs {
        logits.push(dot(q, n) / tau);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    Ok(-((logits[0] - max) - denom.ln()))
}

/// Mean InfoNCE over a batch plus its gradient with respect to the query
/// embeddings. Negatives for query i are the queue entries plus every
/// non-matching key of the batch. Keys receive no gradient.
pub fn info_nce_batch(
    queries: &Tensor,
    keys: &Tensor,
    queue: &[Vec<f64>],
    tau: f64,
) -> Result<(f64, Tensor)> {
    if queries.shape != keys.shape || queries.shape.len() != 2 {
        return Err(Error::invalid("queries and keys must both be [N, d]"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("temperature must be > 0"));
    }
    let n = queries.shape[0];
    let d = queries.shape[1];
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if queue.iter().any(|e| e.len() != d) {
        return Err(Error::invalid("queue entry dimension mismatch"));
    }

    let mut total_loss = 0.0;
    let mut d_queries = Tensor::zeros(&queries.shape);
    // Candidate order for query i: its positive key first, then the other
    // batch keys, then the queue.
    let mut logits: Vec<f64> = Vec::new();
    for i in 0..n {
        let qi = &queries.data[i * d..(i + 1) * d];
        logits.clear();
        for j in 0..n {
            logits.push(dot(qi, &keys.data[j * d..(j + 1) * d]) / tau);
        }
        for e in queue {
            logits.push(dot(qi, e) / tau);
        }
        // Softmax over [own key + negatives]; own key sits at slot i.
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let log_denom = denom.ln();
        total_loss += -((logits[i] - max) - log_denom);

        // dL_i/dq = (sum_c p_c v_c - k_i) / tau, p = softmax over candidates.
        let dq = &mut d_queries.data[i * d..(i + 1) * d];
        for (c, &logit) in logits.iter().enumerate() {
            let p = (logit - max).exp() / denom;
            let v = if c < n {
                &keys.data[c * d..(c + 1) * d]
            } else {
                &queue[c - n][..]
            };
            for (x, &vv) in dq.iter_mut().zip(v) {
                *x += p * vv;
            }
        }
        let ki = &keys.data[i * d..(i + 1) * d];
        for (x, &kv) in dq.iter_mut().zip(ki) {
            *x = (*x - kv) / tau;
        }
    }
    // Mean over the batch.
    let scale = 1.0 / n as f64;
    for v in &mut d_queries.data {
        *v *= scale;
    }
    Ok((total_loss * scale, d_queries))
}

/// FIFO ring buffer of past momentum-encoder keys.
#[derive(Clone, Debug)]
pub struct NegativeQueue {
    capacity: usize,
    dim: usize,
    entries: std::collections::VecDeque<Vec<f64>>,
}

impl NegativeQueue {
    pub fn new(capacity: usize, dim: usize) -> Self {
        NegativeQueue {
            capacity,
            dim,
            entries: std::collections::VecDeque::with_capacity(capacity.min(1 << 20)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append keys in order, evicting the oldest entries past capacity.
    pub fn push(&mut self, keys: &Tensor) -> Result<()> {
        if keys.shape.len() != 2 || keys.shape[1] != self.dim {
            return Err(Error::invalid(format!(
                "queue expects [N, {}] keys, got {:?}",
                self.dim, keys.shape
            )));
        }
        let n = keys.shape[0];
        for i in 0..n {
            let row = keys.data[i * self.dim..(i + 1) * self.dim].to_vec();
            debug_assert!(
                (row.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-5,
                "queue keys must be unit-norm"
            );
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(row);
        }
        Ok(())
    }

    /// Entries oldest-first.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.entries.iter().cloned().collect()
    }
}

/// Eq.-style momentum update: `theta_k <- m*theta_k + (1-m)*theta_q`.
pub fn momentum_update(key: &mut EncoderState, online: &EncoderState, m: f64) -> Result<()> {
    key.momentum_update_from(online, m)
}

/// Cosine-annealed learning rate: `lr0 * 0.5 * (1 + cos(pi * t / total))`.
pub fn lr_at(step: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("total step count must be > 0"));
    }
    if step > total {
        return Err(Error::invalid(format!("step {step} past total {total}")));
    }
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Minimal tensor and layer machinery for the contrastive encoder.
//!
//! Everything computes in f64; layers cache what their backward pass needs.
//! No autograd: each layer implements its analytic backward explicitly, and
//! the whole stack is verified against central finite differences.

pub mod checkpoint;
pub mod encoder;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Dense n-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// He-style normal init with std `sqrt(2 / fan_in)`.
    pub fn he_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        Tensor {
            shape: shape.to_vec(),
            data: (0..shape.iter().product())
                .map(|_| normal.sample(rng))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// 3x3 convolution, stride 1, zero padding 1. Keeps spatial size.
#[derive(Clone, Debug)]
pub struct Conv3x3 {
    pub in_ch: usize,
    pub out_ch: usize,
    pub weight: Tensor, // [out, in, 3, 3]
    pub bias: Tensor,   // [out]
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    pub vel_weight: Tensor,
    pub vel_bias: Tensor,
    cache_input: Option<Tensor>,
}

impl Conv3x3 {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_ch * 9;
        Conv3x3 {
            in_ch,
            out_ch,
            weight: Tensor::he_init(&[out_ch, in_ch, 3, 3], fan_in, rng),
            bias: Tensor::zeros(&[out_ch]),
            grad_weight: Tensor::zeros(&[out_ch, in_ch, 3, 3]),
            grad_bias: Tensor::zeros(&[out_ch]),
            vel_weight: Tensor::zeros(&[out_ch, in_ch, 3, 3]),
            vel_bias: Tensor::zeros(&[out_ch]),
            cache_input: None,
        }
    }

    /// `x`: [N, in, H, W] -> [N, out, H, W].
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        if train {
            self.cache_input = Some(x.clone());
        }
        self.eval(x)
    }

    /// Pure forward pass (no caching); identical arithmetic to training.
    pub fn eval(&self, x: &Tensor) -> Tensor {
        let (n, h, w) = batch_dims(x, self.in_ch);
        let mut y = Tensor::zeros(&[n, self.out_ch, h, w]);
        let plane = h * w;
        for b in 0..n {
            for oc in 0..self.out_ch {
                let out_base = (b * self.out_ch + oc) * plane;
                let bias = self.bias.data[oc];
                for ic in 0..self.in_ch {
                    let in_base = (b * self.in_ch + ic) * plane;
                    let w_base = (oc * self.in_ch + ic) * 9;
                    let wgt = &self.weight.data[w_base..w_base + 9];
                    for oy in 0..h {
                        for ox in 0..w {
                            let mut acc = 0.0;
                            for ky in 0..3usize {
                                let iy = oy as isize + ky as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let ix = ox as isize + kx as isize - 1;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += wgt[ky * 3 + kx]
                                        * x.data[in_base + iy as usize * w + ix as usize];
                                }
                            }
                            y.data[out_base + oy * w + ox] += acc;
                        }
                    }
                }
                for i in 0..plane {
                    y.data[out_base + i] += bias;
                }
            }
        }
        y
    }

    /// `dy`: [N, out, H, W] -> gradient w.r.t. input; accumulates weight
    /// and bias gradients.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .cache_input
            .as_ref()
            .ok_or_else(|| Error::StateError("conv backward before forward".into()))?;
        let (n, h, w) = batch_dims(x, self.in_ch);
        let plane = h * w;
        let mut dx = Tensor::zeros(&x.shape);
        for b in 0..n {
            for oc in 0..self.out_ch {
                let out_base = (b * self.out_ch + oc) * plane;
                for i in 0..plane {
                    self.grad_bias.data[oc] += dy.data[out_base + i];
                }
                for ic in 0..self.in_ch {
                    let in_base = (b * self.in_ch + ic) * plane;
                    let w_base = (oc * self.in_ch + ic) * 9;
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let wgt = self.weight.data[w_base + ky * 3 + kx];
                            let mut gw = 0.0;
                            for oy in 0..h {
                                let iy = oy as isize + ky as isize - 1;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for ox in 0..w {
                                    let ix = ox as isize + kx as isize - 1;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let g = dy.data[out_base + oy * w + ox];
                                    let xi = in_base + iy as usize * w + ix as usize;
                                    gw += g * x.data[xi];
                                    dx.data[xi] += g * wgt;
                                }
                            }
                            self.grad_weight.data[w_base + ky * 3 + kx] += gw;
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Per-channel batch normalization over (N, H, W), batch statistics in
/// training mode, running averages in inference mode.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub ch: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub grad_gamma: Tensor,
    pub grad_beta: Tensor,
    pub vel_gamma: Tensor,
    pub vel_beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    eps: f64,
    momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Clone, Debug)]
struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>, // per channel
}

impl BatchNorm {
    pub fn new(ch: usize) -> Self {
        let mut gamma = Tensor::zeros(&[ch]);
        gamma.fill(1.0);
        let mut running_var = Tensor::zeros(&[ch]);
        running_var.fill(1.0);
        BatchNorm {
            ch,
            gamma,
            beta: Tensor::zeros(&[ch]),
            grad_gamma: Tensor::zeros(&[ch]),
            grad_beta: Tensor::zeros(&[ch]),
            vel_gamma: Tensor::zeros(&[ch]),
            vel_beta: Tensor::zeros(&[ch]),
            running_mean: Tensor::zeros(&[ch]),
            running_var,
            eps: 1e-5,
            momentum: 0.1,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let (n, h, w) = batch_dims(x, self.ch);
        let plane = h * w;
        let m = (n * plane) as f64;
        let mut y = Tensor::zeros(&x.shape);
        if train {
            let mut x_hat = Tensor::zeros(&x.shape);
            let mut inv_std = vec![0.0; self.ch];
            for c in 0..self.ch {
                let mut mean = 0.0;
                for b in 0..n {
                    let base = (b * self.ch + c) * plane;
                    for i in 0..plane {
                        mean += x.data[base + i];
                    }
                }
                mean /= m;
                let mut var = 0.0;
                for b in 0..n {
                    let base = (b * self.ch + c) * plane;
                    for i in 0..plane {
                        let d = x.data[base + i] - mean;
                        var += d * d;
                    }
                }
                var /= m;
                let istd = 1.0 / (var + self.eps).sqrt();
                inv_std[c] = istd;
                for b in 0..n {
                    let base = (b * self.ch + c) * plane;
                    for i in 0..plane {
                        let xh = (x.data[base + i] - mean) * istd;
                        x_hat.data[base + i] = xh;
                        y.data[base + i] = self.gamma.data[c] * xh + self.beta.data[c];
                    }
                }
                self.running_mean.data[c] =
                    (1.0 - self.momentum) * self.running_mean.data[c] + self.momentum * mean;
                self.running_var.data[c] =
                    (1.0 - self.momentum) * self.running_var.data[c] + self.momentum * var;
            }
            self.cache = Some(BnCache { x_hat, inv_std });
        } else {
            return self.eval(x);
        }
        y
    }

    /// Inference-mode normalization using running statistics.
    pub fn eval(&self, x: &Tensor) -> Tensor {
        let (n, h, w) = batch_dims(x, self.ch);
        let plane = h * w;
        let mut y = Tensor::zeros(&x.shape);
        for c in 0..self.ch {
            let istd = 1.0 / (self.running_var.data[c] + self.eps).sqrt();
            let mean = self.running_mean.data[c];
            for b in 0..n {
                let base = (b * self.ch + c) * plane;
                for i in 0..plane {
                    y.data[base + i] =
                        self.gamma.data[c] * (x.data[base + i] - mean) * istd + self.beta.data[c];
                }
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::StateError("batchnorm backward before forward".into()))?;
        let (n, h, w) = batch_dims(dy, self.ch);
        let plane = h * w;
        let m = (n * plane) as f64;
        let mut dx = Tensor::zeros(&dy.shape);
        for c in 0..self.ch {
            let istd = cache.inv_std[c];
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for b in 0..n {
                let base = (b * self.ch + c) * plane;
                for i in 0..plane {
                    let g = dy.data[base + i];
                    sum_dy += g;
                    sum_dy_xhat += g * cache.x_hat.data[base + i];
                }
            }
            self.grad_beta.data[c] += sum_dy;
            self.grad_gamma.data[c] += sum_dy_xhat;
            let gamma = self.gamma.data[c];
            for b in 0..n {
                let base = (b * self.ch + c) * plane;
                for i in 0..plane {
                    let g = dy.data[base + i];
                    let xh = cache.x_hat.data[base + i];
                    dx.data[base + i] =
                        gamma * istd / m * (m * g - sum_dy - xh * sum_dy_xhat);
                }
            }
        }
        Ok(dx)
    }
}

/// Elementwise softplus, `ln(1 + e^x)`. Smooth everywhere, so central
/// finite differences converge cleanly during gradient verification.
#[derive(Clone, Debug, Default)]
pub struct Softplus {
    sigmoid: Option<Vec<f64>>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Softplus {
    pub fn new() -> Self {
        Softplus::default()
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        if train {
            self.sigmoid = Some(x.data.iter().map(|&v| sigmoid(v)).collect());
        }
        self.eval(x)
    }

    pub fn eval(&self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        for v in y.data.iter_mut() {
            *v = softplus(*v);
        }
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let sig = self
            .sigmoid
            .as_ref()
            .ok_or_else(|| Error::StateError("softplus backward before forward".into()))?;
        let mut dx = dy.clone();
        for (v, &s) in dx.data.iter_mut().zip(sig) {
            *v *= s;
        }
        Ok(dx)
    }
}

/// 2x2 average pooling with stride 2 (floor semantics on odd sizes).
#[derive(Clone, Debug, Default)]
pub struct AvgPool2 {
    in_shape: Option<Vec<usize>>,
}

impl AvgPool2 {
    pub fn new() -> Self {
        AvgPool2::default()
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        if train {
            self.in_shape = Some(x.shape.clone());
        }
        self.eval(x)
    }

    pub fn eval(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = nchw(x);
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Tensor::zeros(&[n, c, oh, ow]);
        for b in 0..n {
            for ch in 0..c {
                let ib = (b * c + ch) * h * w;
                let ob = (b * c + ch) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let i0 = ib + 2 * oy * w + 2 * ox;
                        y.data[ob + oy * ow + ox] = 0.25
                            * (x.data[i0]
                                + x.data[i0 + 1]
                                + x.data[i0 + w]
                                + x.data[i0 + w + 1]);
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let shape = self
            .in_shape
            .as_ref()
            .ok_or_else(|| Error::StateError("pool backward before forward".into()))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut dx = Tensor::zeros(shape);
        for b in 0..n {
            for ch in 0..c {
                let ib = (b * c + ch) * h * w;
                let ob = (b * c + ch) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = 0.25 * dy.data[ob + oy * ow + ox];
                        let i0 = ib + 2 * oy * w + 2 * ox;
                        dx.data[i0] += g;
                        dx.data[i0 + 1] += g;
                        dx.data[i0 + w] += g;
                        dx.data[i0 + w + 1] += g;
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Global average pooling [N, C, H, W] -> [N, C].
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool {
    in_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool::default()
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        if train {
            self.in_shape = Some(x.shape.clone());
        }
        self.eval(x)
    }

    pub fn eval(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = nchw(x);
        let plane = h * w;
        let mut y = Tensor::zeros(&[n, c]);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                let sum: f64 = x.data[base..base + plane].iter().sum();
                y.data[b * c + ch] = sum / plane as f64;
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let shape = self
            .in_shape
            .as_ref()
            .ok_or_else(|| Error::StateError("gap backward before forward".into()))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let plane = h * w;
        let mut dx = Tensor::zeros(shape);
        for b in 0..n {
            for ch in 0..c {
                let g = dy.data[b * c + ch] / plane as f64;
                let base = (b * c + ch) * plane;
                for i in 0..plane {
                    dx.data[base + i] = g;
                }
            }
        }
        Ok(dx)
    }
}

/// Fully connected layer, `x`: [N, in] -> [N, out].
#[derive(Clone, Debug)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor, // [out, in]
    pub bias: Tensor,   // [out]
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    pub vel_weight: Tensor,
    pub vel_bias: Tensor,
    cache_input: Option<Tensor>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            in_dim,
            out_dim,
            weight: Tensor::he_init(&[out_dim, in_dim], in_dim, rng),
            bias: Tensor::zeros(&[out_dim]),
            grad_weight: Tensor::zeros(&[out_dim, in_dim]),
            grad_bias: Tensor::zeros(&[out_dim]),
            vel_weight: Tensor::zeros(&[out_dim, in_dim]),
            vel_bias: Tensor::zeros(&[out_dim]),
            cache_input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        if train {
            self.cache_input = Some(x.clone());
        }
        self.eval(x)
    }

    pub fn eval(&self, x: &Tensor) -> Tensor {
        let n = x.shape[0];
        let mut y = Tensor::zeros(&[n, self.out_dim]);
        for b in 0..n {
            let xb = &x.data[b * self.in_dim..(b + 1) * self.in_dim];
            for o in 0..self.out_dim {
                let wrow = &self.weight.data[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = self.bias.data[o];
                for i in 0..self.in_dim {
                    acc += wrow[i] * xb[i];
                }
                y.data[b * self.out_dim + o] = acc;
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .cache_input
            .as_ref()
            .ok_or_else(|| Error::StateError("linear backward before forward".into()))?;
        let n = x.shape[0];
        let mut dx = Tensor::zeros(&x.shape);
        for b in 0..n {
            let xb = &x.data[b * self.in_dim..(b + 1) * self.in_dim];
            let gb = &dy.data[b * self.out_dim..(b + 1) * self.out_dim];
            for o in 0..self.out_dim {
                let g = gb[o];
                self.grad_bias.data[o] += g;
                let wrow = o * self.in_dim;
                for i in 0..self.in_dim {
                    self.grad_weight.data[wrow + i] += g * xb[i];
                    dx.data[b * self.in_dim + i] += g * self.weight.data[wrow + i];
                }
            }
        }
        Ok(dx)
    }
}

/// Row-wise L2 normalization with a degenerate-norm guard.
#[derive(Clone, Debug, Default)]
pub struct L2Normalize {
    cache: Option<(Tensor, Vec<f64>)>, // normalized rows, input norms
}

const MIN_NORM: f64 = 1e-12;

impl L2Normalize {
    pub fn new() -> Self {
        L2Normalize::default()
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (y, norms) = Self::normalize(x)?;
        if train {
            self.cache = Some((y.clone(), norms));
        }
        Ok(y)
    }

    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Self::normalize(x)?.0)
    }

    fn normalize(x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let n = x.shape[0];
        let d = x.shape[1];
        let mut y = x.clone();
        let mut norms = vec![0.0; n];
        for b in 0..n {
            let row = &mut y.data[b * d..(b + 1) * d];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < MIN_NORM {
                return Err(Error::NumericFailure(format!(
                    "degenerate embedding norm {norm} in row {b}"
                )));
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
            norms[b] = norm;
        }
        Ok((y, norms))
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let (y, norms) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::StateError("l2norm backward before forward".into()))?;
        let n = dy.shape[0];
        let d = dy.shape[1];
        let mut dx = Tensor::zeros(&dy.shape);
        for b in 0..n {
            let yb = &y.data[b * d..(b + 1) * d];
            let gb = &dy.data[b * d..(b + 1) * d];
            let dot: f64 = yb.iter().zip(gb).map(|(a, g)| a * g).sum();
            for i in 0..d {
                dx.data[b * d + i] = (gb[i] - yb[i] * dot) / norms[b];
            }
        }
        Ok(dx)
    }
}

fn batch_dims(x: &Tensor, ch: usize) -> (usize, usize, usize) {
    assert_eq!(x.shape.len(), 4, "expected NCHW tensor");
    assert_eq!(x.shape[1], ch, "channel mismatch");
    (x.shape[0], x.shape[2], x.shape[3])
}

fn nchw(x: &Tensor) -> (usize, usize, usize, usize) {
    assert_eq!(x.shape.len(), 4, "expected NCHW tensor");
    (x.shape[0], x.shape[1], x.shape[2], x.shape[3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: (0..shape.iter().product())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        }
    }

    /// Finite-difference check of input gradients for a layer closure.
    fn check_input_grad(
        x: &Tensor,
        mut forward: impl FnMut(&Tensor) -> Tensor,
        dx_analytic: &Tensor,
        tol: f64,
    ) {
        let eps = 1e-5;
        // Scalar objective: sum of outputs weighted by a fixed pattern.
        let weight_of = |i: usize| ((i % 7) as f64 - 3.0) / 3.0;
        let objective = |t: &Tensor, f: &mut dyn FnMut(&Tensor) -> Tensor| -> f64 {
            f(t).data.iter().enumerate().map(|(i, v)| weight_of(i) * v).sum()
        };
        for i in (0..x.len()).step_by((x.len() / 17).max(1)) {
            let mut xp = x.clone();
            xp.data[i] += eps;
            let mut xm = x.clone();
            xm.data[i] -= eps;
            let fd = (objective(&xp, &mut forward) - objective(&xm, &mut forward)) / (2.0 * eps);
            let an = dx_analytic.data[i];
            assert!(
                (fd - an).abs() <= tol * (1.0 + fd.abs().max(an.abs())),
                "input grad mismatch at {i}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn conv_input_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&[2, 2, 5, 5], &mut rng);
        let mut conv = Conv3x3::new(2, 3, &mut rng);
        let y = conv.forward(&x, true);
        let mut dy = Tensor::zeros(&y.shape);
        for (i, v) in dy.data.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) / 3.0;
        }
        let dx = conv.backward(&dy).unwrap();
        let mut conv2 = conv.clone();
        check_input_grad(&x, move |t| conv2.forward(t, false), &dx, 1e-6);
    }

    #[test]
    fn batchnorm_input_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&[3, 2, 4, 4], &mut rng);
        let mut bn = BatchNorm::new(2);
        let y = bn.forward(&x, true);
        let mut dy = Tensor::zeros(&y.shape);
        for (i, v) in dy.data.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) / 3.0;
        }
        let dx = bn.backward(&dy).unwrap();
        // The closure recomputes batch statistics each call, like training.
        let mut bn2 = bn.clone();
        check_input_grad(&x, move |t| bn2.forward(t, true), &dx, 1e-5);
    }

    #[test]
    fn linear_input_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&[4, 6], &mut rng);
        let mut lin = Linear::new(6, 3, &mut rng);
        let y = lin.forward(&x, true);
        let mut dy = Tensor::zeros(&y.shape);
        for (i, v) in dy.data.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) / 3.0;
        }
        let dx = lin.backward(&dy).unwrap();
        let mut lin2 = lin.clone();
        check_input_grad(&x, move |t| lin2.forward(t, false), &dx, 1e-6);
    }

    #[test]
    fn l2_normalize_rows_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&[5, 8], &mut rng);
        let mut l2 = L2Normalize::new();
        let y = l2.forward(&x, false).unwrap();
        for b in 0..5 {
            let norm: f64 = y.data[b * 8..(b + 1) * 8].iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn l2_normalize_rejects_zero_rows() {
        let x = Tensor::zeros(&[1, 4]);
        let mut l2 = L2Normalize::new();
        assert!(matches!(
            l2.forward(&x, false),
            Err(Error::NumericFailure(_))
        ));
    }

    #[test]
    fn l2_normalize_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&[3, 6], &mut rng);
        let mut l2 = L2Normalize::new();
        let y = l2.forward(&x, true).unwrap();
        let mut dy = Tensor::zeros(&y.shape);
        for (i, v) in dy.data.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) / 3.0;
        }
        let dx = l2.backward(&dy).unwrap();
        let mut l2b = L2Normalize::new();
        check_input_grad(&x, move |t| l2b.forward(t, false).unwrap(), &dx, 1e-6);
    }

    #[test]
    fn avgpool_halves_and_backprop_spreads() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_tensor(&[1, 1, 4, 6], &mut rng);
        let mut pool = AvgPool2::new();
        let y = pool.forward(&x, true);
        assert_eq!(y.shape, vec![1, 1, 2, 3]);
        assert!((y.data[0] - 0.25 * (x.data[0] + x.data[1] + x.data[6] + x.data[7])).abs() < 1e-12);
        let mut dy = Tensor::zeros(&y.shape);
        dy.fill(1.0);
        let dx = pool.backward(&dy).unwrap();
        assert!((dx.data.iter().sum::<f64>() - y.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut conv = Conv3x3::new(1, 1, &mut ChaCha8Rng::seed_from_u64(7));
        let dy = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(matches!(conv.backward(&dy), Err(Error::StateError(_))));
    }
}

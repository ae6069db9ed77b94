//! Layer kernels with forward caches and hand-written backward passes.

use super::tensor::{gemm, Tensor4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Forward-pass mode. Training draws dropout masks and uses batch statistics.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[out_c, in_c * kernel * kernel]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub c: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    BatchNorm(BatchNorm),
    /// 2x2 average pooling, stride 2, trailing odd row/column dropped.
    AvgPool2,
    Dropout { rate: f64 },
    /// Mean over frequency, then max over time: `[N, C, H, W] -> [N, C, 1, 1]`.
    GlobalPool,
}

pub(crate) enum Cache {
    Conv { cols: Vec<Vec<f64>>, in_shape: (usize, usize, usize, usize) },
    Relu { out: Tensor4 },
    BatchNorm { xhat: Tensor4, inv_std: Vec<f64>, train: bool, batch_mean: Vec<f64>, batch_var: Vec<f64> },
    Pool { in_shape: (usize, usize, usize, usize) },
    Dropout { mask: Option<Vec<f64>> },
    Global { argmax: Vec<usize>, in_shape: (usize, usize, usize, usize) },
}

pub(crate) enum Grad {
    Conv { dw: Vec<f64>, db: Vec<f64> },
    BatchNorm { dgamma: Vec<f64>, dbeta: Vec<f64> },
    None,
}

impl Conv2d {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let f = |x: usize| (x + 2 * self.pad).saturating_sub(self.kernel) / self.stride + 1;
        (f(h), f(w))
    }

    fn k_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
        let k = self.kernel;
        let mut cols = vec![0.0; self.k_len() * ho * wo];
        for c in 0..self.in_c {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                    for oh in 0..ho {
                        let ih = (oh * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                        for ow in 0..wo {
                            let iw = (ow * self.stride + kj) as isize - self.pad as isize;
                            if iw >= 0 && iw < w as isize {
                                dst[oh * wo + ow] = src[iw as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64], h: usize, w: usize, ho: usize, wo: usize) {
        let k = self.kernel;
        for c in 0..self.in_c {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                    for oh in 0..ho {
                        let ih = (oh * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[ih as usize * w..(ih as usize + 1) * w];
                        for ow in 0..wo {
                            let iw = (ow * self.stride + kj) as isize - self.pad as isize;
                            if iw >= 0 && iw < w as isize {
                                dst[iw as usize] += src[oh * wo + ow];
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Tensor4) -> (Tensor4, Cache) {
        let (ho, wo) = self.out_hw(x.h, x.w);
        let mut out = Tensor4::zeros(x.n, self.out_c, ho, wo);
        let mut all_cols = Vec::with_capacity(x.n);
        for i in 0..x.n {
            let cols = self.im2col(x.sample(i), x.h, x.w, ho, wo);
            let y = out.sample_mut(i);
            for (o, b) in self.bias.iter().enumerate() {
                y[o * ho * wo..(o + 1) * ho * wo].fill(*b);
            }
            gemm(self.out_c, self.k_len(), ho * wo, &self.weight, false, &cols, false, 1.0, y);
            all_cols.push(cols);
        }
        (out, Cache::Conv { cols: all_cols, in_shape: (x.n, x.c, x.h, x.w) })
    }

    fn backward(&self, cols: &[Vec<f64>], in_shape: (usize, usize, usize, usize), dy: &Tensor4, need_dx: bool) -> (Option<Tensor4>, Grad) {
        let (n, c, h, w) = in_shape;
        let hw = dy.h * dy.w;
        let kl = self.k_len();
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.out_c];
        let mut dx = need_dx.then(|| Tensor4::zeros(n, c, h, w));
        let mut dcols = vec![0.0; kl * hw];
        for i in 0..n {
            let g = dy.sample(i);
            for (o, d) in db.iter_mut().enumerate() {
                *d += g[o * hw..(o + 1) * hw].iter().sum::<f64>();
            }
            gemm(self.out_c, hw, kl, g, false, &cols[i], true, 1.0, &mut dw);
            if let Some(dx) = dx.as_mut() {
                gemm(kl, self.out_c, hw, &self.weight, true, g, false, 0.0, &mut dcols);
                self.col2im(&dcols, dx.sample_mut(i), h, w, dy.h, dy.w);
            }
        }
        (dx, Grad::Conv { dw, db })
    }
}

impl BatchNorm {
    fn forward(&self, x: &Tensor4, train: bool) -> (Tensor4, Cache) {
        let plane = x.plane();
        let m = (x.n * plane) as f64;
        let (mean, var) = if train {
            let mut mean = vec![0.0; self.c];
            let mut var = vec![0.0; self.c];
            for c in 0..self.c {
                let mut s = 0.0;
                for i in 0..x.n {
                    s += x.sample(i)[c * plane..(c + 1) * plane].iter().sum::<f64>();
                }
                let mu = s / m;
                let mut v = 0.0;
                for i in 0..x.n {
                    v += x.sample(i)[c * plane..(c + 1) * plane].iter().map(|a| (a - mu) * (a - mu)).sum::<f64>();
                }
                mean[c] = mu;
                var[c] = v / m;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = x.same_shape();
        let mut out = x.same_shape();
        for i in 0..x.n {
            for c in 0..self.c {
                let r = i * x.sample_len() + c * plane..i * x.sample_len() + (c + 1) * plane;
                for j in r {
                    let xh = (x.data[j] - mean[c]) * inv_std[c];
                    xhat.data[j] = xh;
                    out.data[j] = self.gamma[c] * xh + self.beta[c];
                }
            }
        }
        (out, Cache::BatchNorm { xhat, inv_std, train, batch_mean: mean, batch_var: var })
    }

    fn backward(&self, xhat: &Tensor4, inv_std: &[f64], train: bool, dy: &Tensor4) -> (Tensor4, Grad) {
        let plane = dy.plane();
        let m = (dy.n * plane) as f64;
        let mut dgamma = vec![0.0; self.c];
        let mut dbeta = vec![0.0; self.c];
        for i in 0..dy.n {
            for c in 0..self.c {
                let off = i * dy.sample_len() + c * plane;
                for j in off..off + plane {
                    dgamma[c] += dy.data[j] * xhat.data[j];
                    dbeta[c] += dy.data[j];
                }
            }
        }
        let mut dx = dy.same_shape();
        for i in 0..dy.n {
            for c in 0..self.c {
                let off = i * dy.sample_len() + c * plane;
                let g = self.gamma[c];
                for j in off..off + plane {
                    dx.data[j] = if train {
                        g * inv_std[c] / m * (m * dy.data[j] - dbeta[c] - xhat.data[j] * dgamma[c])
                    } else {
                        g * inv_std[c] * dy.data[j]
                    };
                }
            }
        }
        (dx, Grad::BatchNorm { dgamma, dbeta })
    }

    /// Exponential running-statistics update from one training batch of `count` values per channel.
    pub(crate) fn update_running(&mut self, mean: &[f64], var: &[f64], count: usize) {
        let unbias = if count > 1 { count as f64 / (count - 1) as f64 } else { 1.0 };
        for c in 0..self.c {
            self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * mean[c];
            self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * var[c] * unbias;
        }
    }
}

fn avg_pool2(x: &Tensor4) -> Tensor4 {
    let (ho, wo) = (x.h / 2, x.w / 2);
    let mut out = Tensor4::zeros(x.n, x.c, ho, wo);
    for i in 0..x.n {
        for c in 0..x.c {
            let src = &x.data[(i * x.c + c) * x.plane()..];
            let dst = &mut out.data[(i * x.c + c) * ho * wo..];
            for oh in 0..ho {
                for ow in 0..wo {
                    let a = 2 * oh * x.w + 2 * ow;
                    dst[oh * wo + ow] = 0.25 * (src[a] + src[a + 1] + src[a + x.w] + src[a + x.w + 1]);
                }
            }
        }
    }
    out
}

fn avg_pool2_backward(in_shape: (usize, usize, usize, usize), dy: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = in_shape;
    let mut dx = Tensor4::zeros(n, c, h, w);
    for i in 0..n {
        for ch in 0..c {
            let src = &dy.data[(i * c + ch) * dy.plane()..];
            let dst = &mut dx.data[(i * c + ch) * h * w..];
            for oh in 0..dy.h {
                for ow in 0..dy.w {
                    let g = 0.25 * src[oh * dy.w + ow];
                    let a = 2 * oh * w + 2 * ow;
                    dst[a] += g;
                    dst[a + 1] += g;
                    dst[a + w] += g;
                    dst[a + w + 1] += g;
                }
            }
        }
    }
    dx
}

/// Frequency-mean / time-max pooling. Returns pooled `[n * c]` values and the argmax frame.
pub fn global_pool(x: &Tensor4) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(x.n * x.c);
    let mut arg = Vec::with_capacity(x.n * x.c);
    for i in 0..x.n {
        for c in 0..x.c {
            let plane = &x.data[(i * x.c + c) * x.plane()..(i * x.c + c + 1) * x.plane()];
            let mut best = f64::NEG_INFINITY;
            let mut best_t = 0;
            for t in 0..x.w {
                let m = (0..x.h).map(|f| plane[f * x.w + t]).sum::<f64>() / x.h as f64;
                if m > best {
                    best = m;
                    best_t = t;
                }
            }
            out.push(best);
            arg.push(best_t);
        }
    }
    (out, arg)
}

impl Layer {
    pub(crate) fn forward(&self, x: Tensor4, mode: &mut Mode<'_>) -> (Tensor4, Cache) {
        match self {
            Layer::Conv(conv) => conv.forward(&x),
            Layer::Relu => {
                let mut out = x;
                out.data.iter_mut().for_each(|v| *v = v.max(0.0));
                (out.clone(), Cache::Relu { out })
            }
            Layer::BatchNorm(bn) => bn.forward(&x, mode.is_train()),
            Layer::AvgPool2 => (avg_pool2(&x), Cache::Pool { in_shape: (x.n, x.c, x.h, x.w) }),
            Layer::Dropout { rate } => match mode {
                Mode::Train(rng) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> =
                        (0..x.data.len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                    let mut out = x;
                    out.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    (out, Cache::Dropout { mask: Some(mask) })
                }
                _ => (x, Cache::Dropout { mask: None }),
            },
            Layer::GlobalPool => {
                let (vals, argmax) = global_pool(&x);
                (Tensor4::from_vec(x.n, x.c, 1, 1, vals), Cache::Global { argmax, in_shape: (x.n, x.c, x.h, x.w) })
            }
        }
    }

    pub(crate) fn backward(&self, cache: &Cache, dy: Tensor4, need_dx: bool) -> (Option<Tensor4>, Grad) {
        match (self, cache) {
            (Layer::Conv(conv), Cache::Conv { cols, in_shape }) => conv.backward(cols, *in_shape, &dy, need_dx),
            (Layer::Relu, Cache::Relu { out }) => {
                let mut dx = dy;
                dx.data.iter_mut().zip(&out.data).for_each(|(g, o)| {
                    if *o <= 0.0 {
                        *g = 0.0
                    }
                });
                (Some(dx), Grad::None)
            }
            (Layer::BatchNorm(bn), Cache::BatchNorm { xhat, inv_std, train, .. }) => {
                let (dx, g) = bn.backward(xhat, inv_std, *train, &dy);
                (Some(dx), g)
            }
            (Layer::AvgPool2, Cache::Pool { in_shape }) => (Some(avg_pool2_backward(*in_shape, &dy)), Grad::None),
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => {
                let mut dx = dy;
                if let Some(mask) = mask {
                    dx.data.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                }
                (Some(dx), Grad::None)
            }
            (Layer::GlobalPool, Cache::Global { argmax, in_shape }) => {
                let (n, c, h, w) = *in_shape;
                let mut dx = Tensor4::zeros(n, c, h, w);
                for (idx, &t) in argmax.iter().enumerate() {
                    let g = dy.data[idx] / h as f64;
                    let base = idx * h * w;
                    for f in 0..h {
                        dx.data[base + f * w + t] = g;
                    }
                }
                (Some(dx), Grad::None)
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}

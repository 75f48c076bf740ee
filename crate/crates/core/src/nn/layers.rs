use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{gemm, Layer, Mode, ParamMut, ParamRef, Scalar, Tensor};
use crate::error::{Error, Result};

/// Glorot-uniform initializer, the Keras default for dense and conv kernels.
fn glorot<T: Scalar>(n: usize, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| T::of(rng.gen_range(-limit..limit))).collect()
}

fn spatial(input: &[usize], kind: &str) -> Result<(usize, usize, usize)> {
    match input {
        [h, w, c] => Ok((*h, *w, *c)),
        other => Err(Error::Shape(format!("{kind} expects (H, W, C) input, got {other:?}"))),
    }
}

/// 2-D convolution with a square odd kernel, stride 1 and zero "same"
/// padding. Weights are laid out `(ky, kx, c_in, c_out)`.
pub struct Conv2d<T> {
    c_in: usize,
    c_out: usize,
    k: usize,
    weight: Vec<T>,
    bias: Vec<T>,
    grad_w: Vec<T>,
    grad_b: Vec<T>,
    input: Option<Tensor<T>>,
    col: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(c_in: usize, c_out: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(k % 2 == 1, "kernel size must be odd");
        let n = k * k * c_in * c_out;
        Self {
            c_in,
            c_out,
            k,
            weight: glorot(n, k * k * c_in, k * k * c_out, rng),
            bias: vec![T::zero(); c_out],
            grad_w: vec![T::zero(); n],
            grad_b: vec![T::zero(); c_out],
            input: None,
            col: Vec::new(),
        }
    }

    fn im2col(&mut self, img: &[T], h: usize, w: usize) {
        let (k, c) = (self.k, self.c_in);
        let pad = (k / 2) as isize;
        let row = k * k * c;
        self.col.clear();
        self.col.resize(h * w * row, T::zero());
        for y in 0..h {
            for x in 0..w {
                let dst = &mut self.col[(y * w + x) * row..(y * w + x + 1) * row];
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = x as isize + kx as isize - pad;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = (sy as usize * w + sx as usize) * c;
                        let d = (ky * k + kx) * c;
                        dst[d..d + c].copy_from_slice(&img[src..src + c]);
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[T], out: &mut [T], h: usize, w: usize) {
        let (k, c) = (self.k, self.c_in);
        let pad = (k / 2) as isize;
        let row = k * k * c;
        for y in 0..h {
            for x in 0..w {
                let src = &col[(y * w + x) * row..(y * w + x + 1) * row];
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = x as isize + kx as isize - pad;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let dst = (sy as usize * w + sx as usize) * c;
                        let s = (ky * k + kx) * c;
                        for ci in 0..c {
                            out[dst + ci] += src[s + ci];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (h, w, c) = spatial(input, "conv2d")?;
        if c != self.c_in {
            return Err(Error::Shape(format!("conv2d expects {} channels, got {c}", self.c_in)));
        }
        Ok(vec![h, w, self.c_out])
    }

    fn forward(&mut self, x: Tensor<T>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Tensor<T> {
        let (b, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let hw = h * w;
        let kk = self.k * self.k * self.c_in;
        let mut out = Tensor::zeros(vec![b, h, w, self.c_out]);
        for i in 0..b {
            self.im2col(x.row(i), h, w);
            let dst = out.row_mut(i);
            for p in 0..hw {
                dst[p * self.c_out..(p + 1) * self.c_out].copy_from_slice(&self.bias);
            }
            gemm(hw, kk, self.c_out, T::one(), &self.col, false, &self.weight, false, T::one(), dst);
        }
        self.input = Some(x);
        out
    }

    fn backward(&mut self, grad: Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        let x = self.input.take().expect("forward before backward");
        let (b, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let hw = h * w;
        let kk = self.k * self.k * self.c_in;
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape.clone()));
        let mut dcol = vec![T::zero(); if need_input_grad { hw * kk } else { 0 }];
        for i in 0..b {
            let g = grad.row(i);
            for p in 0..hw {
                for (gb, &v) in self.grad_b.iter_mut().zip(&g[p * self.c_out..(p + 1) * self.c_out]) {
                    *gb += v;
                }
            }
            self.im2col(x.row(i), h, w);
            let col = std::mem::take(&mut self.col);
            gemm(kk, hw, self.c_out, T::one(), &col, true, g, false, T::one(), &mut self.grad_w);
            self.col = col;
            if let Some(dx) = dx.as_mut() {
                gemm(hw, self.c_out, kk, T::one(), g, false, &self.weight, true, T::zero(), &mut dcol);
                self.col2im(&dcol, dx.row_mut(i), h, w);
            }
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let ws = vec![self.k, self.k, self.c_in, self.c_out];
        vec![
            ParamMut {
                name: "weight".into(),
                shape: ws,
                value: &mut self.weight,
                grad: &mut self.grad_w,
            },
            ParamMut {
                name: "bias".into(),
                shape: vec![self.c_out],
                value: &mut self.bias,
                grad: &mut self.grad_b,
            },
        ]
    }

    fn params(&self) -> Vec<ParamRef<'_, T>> {
        vec![
            ParamRef {
                name: "weight".into(),
                shape: vec![self.k, self.k, self.c_in, self.c_out],
                value: &self.weight,
            },
            ParamRef {
                name: "bias".into(),
                shape: vec![self.c_out],
                value: &self.bias,
            },
        ]
    }
}

/// Fully connected layer on `(B, in)` inputs; weights are `(in, out)`.
pub struct Dense<T> {
    n_in: usize,
    n_out: usize,
    weight: Vec<T>,
    bias: Vec<T>,
    grad_w: Vec<T>,
    grad_b: Vec<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            n_in,
            n_out,
            weight: glorot(n_in * n_out, n_in, n_out, rng),
            bias: vec![T::zero(); n_out],
            grad_w: vec![T::zero(); n_in * n_out],
            grad_b: vec![T::zero(); n_out],
            input: None,
        }
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [self.n_in] {
            return Err(Error::Shape(format!("dense expects ({},), got {input:?}", self.n_in)));
        }
        Ok(vec![self.n_out])
    }

    fn forward(&mut self, x: Tensor<T>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Tensor<T> {
        let b = x.batch();
        let mut out = Tensor::zeros(vec![b, self.n_out]);
        for row in out.data.chunks_mut(self.n_out) {
            row.copy_from_slice(&self.bias);
        }
        gemm(b, self.n_in, self.n_out, T::one(), &x.data, false, &self.weight, false, T::one(), &mut out.data);
        self.input = Some(x);
        out
    }

    fn backward(&mut self, grad: Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        let x = self.input.take().expect("forward before backward");
        let b = x.batch();
        for row in grad.data.chunks(self.n_out) {
            for (gb, &v) in self.grad_b.iter_mut().zip(row) {
                *gb += v;
            }
        }
        gemm(self.n_in, b, self.n_out, T::one(), &x.data, true, &grad.data, false, T::one(), &mut self.grad_w);
        need_input_grad.then(|| {
            let mut dx = Tensor::zeros(x.shape.clone());
            gemm(b, self.n_out, self.n_in, T::one(), &grad.data, false, &self.weight, true, T::zero(), &mut dx.data);
            dx
        })
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut {
                name: "weight".into(),
                shape: vec![self.n_in, self.n_out],
                value: &mut self.weight,
                grad: &mut self.grad_w,
            },
            ParamMut {
                name: "bias".into(),
                shape: vec![self.n_out],
                value: &mut self.bias,
                grad: &mut self.grad_b,
            },
        ]
    }

    fn params(&self) -> Vec<ParamRef<'_, T>> {
        vec![
            ParamRef {
                name: "weight".into(),
                shape: vec![self.n_in, self.n_out],
                value: &self.weight,
            },
            ParamRef {
                name: "bias".into(),
                shape: vec![self.n_out],
                value: &self.bias,
            },
        ]
    }
}

#[derive(Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl<T: Scalar> Layer<T> for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, mut x: Tensor<T>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Tensor<T> {
        self.mask.clear();
        self.mask.extend(x.data.iter().map(|&v| v > T::zero()));
        for (v, &m) in x.data.iter_mut().zip(&self.mask) {
            if !m {
                *v = T::zero();
            }
        }
        x
    }

    fn backward(&mut self, mut grad: Tensor<T>, _need: bool) -> Option<Tensor<T>> {
        for (g, &m) in grad.data.iter_mut().zip(&self.mask) {
            if !m {
                *g = T::zero();
            }
        }
        Some(grad)
    }
}

/// 2x2 max pooling with stride 2.
#[derive(Default)]
pub struct MaxPool2 {
    argmax: Vec<usize>,
    in_shape: Vec<usize>,
}

impl<T: Scalar> Layer<T> for MaxPool2 {
    fn kind(&self) -> &'static str {
        "maxpool2"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (h, w, c) = spatial(input, "maxpool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("maxpool2 needs even H and W, got {h}x{w}")));
        }
        Ok(vec![h / 2, w / 2, c])
    }

    fn forward(&mut self, x: Tensor<T>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Tensor<T> {
        let (b, h, w, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(vec![b, oh, ow, c]);
        self.argmax.clear();
        self.argmax.resize(out.data.len(), 0);
        let in_len = h * w * c;
        let out_len = oh * ow * c;
        for i in 0..b {
            let src = &x.data[i * in_len..(i + 1) * in_len];
            for y in 0..oh {
                for xx in 0..ow {
                    for ch in 0..c {
                        let mut best = (2 * y * w + 2 * xx) * c + ch;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = ((2 * y + dy) * w + 2 * xx + dx) * c + ch;
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                        let o = i * out_len + (y * ow + xx) * c + ch;
                        out.data[o] = src[best];
                        self.argmax[o] = i * in_len + best;
                    }
                }
            }
        }
        self.in_shape = x.shape;
        out
    }

    fn backward(&mut self, grad: Tensor<T>, _need: bool) -> Option<Tensor<T>> {
        let mut dx = Tensor::zeros(self.in_shape.clone());
        for (&g, &idx) in grad.data.iter().zip(&self.argmax) {
            dx.data[idx] += g;
        }
        Some(dx)
    }
}

/// Nearest-neighbour 2x upsampling.
#[derive(Default)]
pub struct Upsample2;

impl<T: Scalar> Layer<T> for Upsample2 {
    fn kind(&self) -> &'static str {
        "upsample2"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (h, w, c) = spatial(input, "upsample2")?;
        Ok(vec![2 * h, 2 * w, c])
    }

    fn forward(&mut self, x: Tensor<T>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Tensor<T> {
        let (b, h, w, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let mut out = Tensor::zeros(vec![b, 2 * h, 2 * w, c]);
        for i in 0..b {
            let src = x.row(i);
            let dst = out.row_mut(i);
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    let s = ((y / 2) * w + xx / 2) * c;
                    let d = (y * 2 * w + xx) * c;
                    dst[d..d + c].copy_from_slice(&src[s..s + c]);
                }
            }
        }
        out
    }

    fn backward(&mut self, grad: Tensor<T>, _need: bool) -> Option<Tensor<T>> {
        let (b, h2, w2, c) = (grad.shape[0], grad.shape[1], grad.shape[2], grad.shape[3]);
        let (h, w) = (h2 / 2, w2 / 2);
        let mut dx = Tensor::zeros(vec![b, h, w, c]);
        for i in 0..b {
            let g = grad.row(i);
            let d = dx.row_mut(i);
            for y in 0..h2 {
                for xx in 0..w2 {
                    let s = (y * w2 + xx) * c;
                    let t = ((y / 2) * w + xx / 2) * c;
                    for ch in 0..c {
                        d[t + ch] += g[s + ch];
                    }
                }
            }
        }
        Some(dx)
    }
}

/// Inverted dropout: active only in [`Mode::Train`].
pub struct Dropout {
    rate: f64,
    mask: Option<Vec<bool>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate, mask: None }
    }
}

impl<T: Scalar> Layer<T> for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, mut x: Tensor<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor<T> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return x;
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mask: Vec<bool> = (0..x.data.len()).map(|_| rng.gen::<f64>() >= self.rate).collect();
        for (v, &m) in x.data.iter_mut().zip(&mask) {
            *v = if m { *v * keep } else { T::zero() };
        }
        self.mask = Some(mask);
        x
    }

    fn backward(&mut self, mut grad: Tensor<T>, _need: bool) -> Option<Tensor<T>> {
        if let Some(mask) = &self.mask {
            let keep = T::of(1.0 / (1.0 - self.rate));
            for (g, &m) in grad.data.iter_mut().zip(mask) {
                *g = if m { *g * keep } else { T::zero() };
            }
        }
        Some(grad)
    }
}

/// Reinterprets the per-sample shape (flatten or unflatten).
pub struct Reshape {
    to: Vec<usize>,
    from: Vec<usize>,
}

impl Reshape {
    pub fn new(to: Vec<usize>) -> Self {
        Self { to, from: Vec::new() }
    }
}

impl<T: Scalar> Layer<T> for Reshape {
    fn kind(&self) -> &'static str {
        "reshape"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.iter().product::<usize>() != self.to.iter().product::<usize>() {
            return Err(Error::Shape(format!("cannot reshape {input:?} to {:?}", self.to)));
        }
        Ok(self.to.clone())
    }

    fn forward(&mut self, mut x: Tensor<T>, _mode: Mode, _rng: &mut ChaCha8Rng) -> Tensor<T> {
        self.from = x.shape.clone();
        let b = x.batch();
        x.shape = std::iter::once(b).chain(self.to.iter().copied()).collect();
        x
    }

    fn backward(&mut self, mut grad: Tensor<T>, _need: bool) -> Option<Tensor<T>> {
        grad.shape = self.from.clone();
        Some(grad)
    }
}

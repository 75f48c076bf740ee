//! Minimal layer library for the encoder and decoders.
//!
//! Tensors are dense row-major buffers whose first axis is the batch.
//! Spatial activations are `(B, H, W, C)`. Each layer caches what it needs
//! during [`Layer::forward`] and accumulates parameter gradients in
//! [`Layer::backward`], so a network is just a [`Sequential`] stack.

mod layers;
mod optim;
mod scalar;

pub use layers::{Conv2d, Dense, Dropout, MaxPool2, Relu, Reshape, Upsample2};
pub use optim::{Adam, AdamConfig};
pub use scalar::{gemm, Scalar};

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub data: Vec<T>,
    pub shape: Vec<usize>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(data: Vec<T>, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Self { data, shape })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            data: vec![T::zero(); n],
            shape,
        }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch entry.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let n = self.row_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let n = self.row_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            data: self
                .data
                .iter()
                .map(|v| U::of(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
            shape: self.shape.clone(),
        }
    }
}

/// Whether stochastic layers (dropout) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Mutable view of one parameter tensor and its gradient.
pub struct ParamMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [T],
    pub grad: &'a mut [T],
}

/// Read-only view of one parameter tensor.
pub struct ParamRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a [T],
}

pub trait Layer<T: Scalar>: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Per-sample output shape for a per-sample input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    fn forward(&mut self, x: Tensor<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Tensor<T>;

    /// Propagates `grad` (w.r.t. the last forward output) back to the input,
    /// adding parameter gradients along the way. Layers may skip computing
    /// the input gradient when `need_input_grad` is false.
    fn backward(&mut self, grad: Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>>;

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        Vec::new()
    }

    fn params(&self) -> Vec<ParamRef<'_, T>> {
        Vec::new()
    }
}

/// A stack of layers applied in order.
pub struct Sequential<T: Scalar> {
    layers: Vec<Box<dyn Layer<T>>>,
    input_shape: Vec<usize>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(input_shape: Vec<usize>) -> Self {
        Self {
            layers: Vec::new(),
            input_shape,
        }
    }

    pub fn push(&mut self, layer: impl Layer<T> + 'static) -> Result<&mut Self> {
        self.output_shape_after(&layer)?;
        self.layers.push(Box::new(layer));
        Ok(self)
    }

    fn output_shape_after(&self, layer: &dyn Layer<T>) -> Result<Vec<usize>> {
        layer.output_shape(&self.output_shape()?)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut s = self.input_shape.clone();
        for l in &self.layers {
            s = l.output_shape(&s)?;
        }
        Ok(s)
    }

    pub fn layer_kinds(&self) -> Vec<&'static str> {
        self.layers.iter().map(|l| l.kind()).collect()
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        if x.shape[1..] != self.input_shape[..] {
            return Err(Error::Shape(format!(
                "network expects per-sample shape {:?}, got {:?}",
                self.input_shape,
                &x.shape[1..]
            )));
        }
        Ok(self.layers.iter_mut().fold(x, |x, l| l.forward(x, mode, rng)))
    }

    /// Backpropagates through every layer; returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, grad: Tensor<T>, need_input_grad: bool) -> Option<Tensor<T>> {
        let mut g = Some(grad);
        let n = self.layers.len();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let want = need_input_grad || i > 0;
            g = layer.backward(g.expect("gradient flows"), want);
            if i == 0 && !need_input_grad {
                return None;
            }
        }
        debug_assert!(n > 0 || g.is_some());
        g
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.kind();
                l.params_mut().into_iter().map(move |mut p| {
                    p.name = format!("{i}.{kind}.{}", p.name);
                    p
                })
            })
            .collect()
    }

    pub fn params(&self) -> Vec<ParamRef<'_, T>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.kind();
                l.params().into_iter().map(move |mut p| {
                    p.name = format!("{i}.{kind}.{}", p.name);
                    p
                })
            })
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

/// Row-wise softmax of a `(B, K)` tensor.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let mut out = logits.clone();
    let k = logits.row_len();
    for row in out.data.chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

//! Dense and convolutional layers over a flat parameter buffer. Each layer
//! knows its slice offsets; activations are row-major batches.

use super::Scalar;
use crate::error::{Error, Result};

/// Batch of values with an explicit shape; the first axis is the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} holds {n} values, buffer has {}", data.len())));
        }
        Ok(Self { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, created as zeros on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per batch row.
    pub fn row_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let r = self.row_len();
        &self.data[i * r..(i + 1) * r]
    }
}

pub fn tanh_inplace<T: Scalar>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = v.tanh());
}

/// Turns `dy` (gradient w.r.t. tanh output `y`) into the gradient w.r.t.
/// the pre-activation.
pub fn tanh_backward<T: Scalar>(y: &[T], dy: &mut [T]) {
    for (g, &y) in dy.iter_mut().zip(y) {
        *g *= T::one() - y * y;
    }
}

/// Fully connected layer, `y = x·W + b` with `W` stored in×out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, offset: usize) -> Self {
        Self {
            inputs,
            outputs,
            offset,
        }
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    pub fn end(&self) -> usize {
        self.offset + self.param_count()
    }

    fn split<'a, T>(&self, p: &'a [T]) -> (&'a [T], &'a [T]) {
        let w_end = self.offset + self.inputs * self.outputs;
        (&p[self.offset..w_end], &p[w_end..self.end()])
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T], batch: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), batch * self.inputs);
        let (w, b) = self.split(params);
        let mut y = Vec::with_capacity(batch * self.outputs);
        for _ in 0..batch {
            y.extend_from_slice(b);
        }
        T::gemm(false, false, batch, self.outputs, self.inputs, T::one(), x, w, T::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// w.r.t. `x` when requested.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        grads: &mut [T],
        x: &[T],
        dy: &[T],
        batch: usize,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let (w, _) = self.split(params);
        let w_end = self.offset + self.inputs * self.outputs;
        let (gw, gb) = grads[self.offset..self.end()].split_at_mut(w_end - self.offset);
        T::gemm(true, false, self.inputs, self.outputs, batch, T::one(), x, dy, T::one(), gw);
        for row in dy.chunks_exact(self.outputs) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); batch * self.inputs];
            T::gemm(false, true, batch, self.inputs, self.outputs, T::one(), dy, w, T::zero(), &mut dx);
            dx
        })
    }
}

pub const KERNEL: usize = 3;

/// 3×3 valid convolution with stride 1 over height×width×channel maps.
/// Weights are stored as a (3·3·in)×out matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub offset: usize,
}

/// Samples per im2col block, bounding scratch memory.
const CONV_BLOCK: usize = 32;

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, height: usize, width: usize, offset: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            height,
            width,
            offset,
        }
    }

    pub fn out_height(&self) -> usize {
        self.height - KERNEL + 1
    }

    pub fn out_width(&self) -> usize {
        self.width - KERNEL + 1
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * self.in_channels
    }

    pub fn output_len(&self) -> usize {
        self.out_height() * self.out_width() * self.out_channels
    }

    fn patch_len(&self) -> usize {
        KERNEL * KERNEL * self.in_channels
    }

    pub fn param_count(&self) -> usize {
        self.patch_len() * self.out_channels + self.out_channels
    }

    pub fn end(&self) -> usize {
        self.offset + self.param_count()
    }

    fn w_end(&self) -> usize {
        self.offset + self.patch_len() * self.out_channels
    }

    fn im2col<T: Scalar>(&self, x: &[T], samples: usize, out: &mut Vec<T>) {
        let (oh, ow, c) = (self.out_height(), self.out_width(), self.in_channels);
        out.clear();
        out.reserve(samples * oh * ow * self.patch_len());
        for s in x.chunks_exact(self.input_len()).take(samples) {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ky in 0..KERNEL {
                        let start = ((oy + ky) * self.width + ox) * c;
                        out.extend_from_slice(&s[start..start + KERNEL * c]);
                    }
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (oh, ow, c) = (self.out_height(), self.out_width(), self.in_channels);
        let pl = self.patch_len();
        for (s, sample_cols) in dx.chunks_exact_mut(self.input_len()).zip(cols.chunks_exact(oh * ow * pl)) {
            for oy in 0..oh {
                for ox in 0..ow {
                    let patch = &sample_cols[(oy * ow + ox) * pl..][..pl];
                    for ky in 0..KERNEL {
                        let start = ((oy + ky) * self.width + ox) * c;
                        for (d, &g) in s[start..start + KERNEL * c].iter_mut().zip(&patch[ky * KERNEL * c..]) {
                            *d += g;
                        }
                    }
                }
            }
        }
    }

    pub fn forward<T: Scalar>(&self, params: &[T], x: &[T], batch: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), batch * self.input_len());
        let w = &params[self.offset..self.w_end()];
        let b = &params[self.w_end()..self.end()];
        let rows_per_sample = self.out_height() * self.out_width();
        let mut y = Vec::with_capacity(batch * self.output_len());
        for _ in 0..batch * rows_per_sample {
            y.extend_from_slice(b);
        }
        let mut cols = Vec::new();
        for start in (0..batch).step_by(CONV_BLOCK) {
            let n = CONV_BLOCK.min(batch - start);
            self.im2col(&x[start * self.input_len()..], n, &mut cols);
            let out = &mut y[start * self.output_len()..(start + n) * self.output_len()];
            T::gemm(
                false,
                false,
                n * rows_per_sample,
                self.out_channels,
                self.patch_len(),
                T::one(),
                &cols,
                w,
                T::one(),
                out,
            );
        }
        y
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        grads: &mut [T],
        x: &[T],
        dy: &[T],
        batch: usize,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let w = &params[self.offset..self.w_end()];
        let rows_per_sample = self.out_height() * self.out_width();
        let pl = self.patch_len();
        let (gw, gb) = grads[self.offset..self.end()].split_at_mut(pl * self.out_channels);
        for row in dy.chunks_exact(self.out_channels) {
            for (g, &d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = want_dx.then(|| vec![T::zero(); batch * self.input_len()]);
        let mut cols = Vec::new();
        let mut dcols = Vec::new();
        for start in (0..batch).step_by(CONV_BLOCK) {
            let n = CONV_BLOCK.min(batch - start);
            let rows = n * rows_per_sample;
            self.im2col(&x[start * self.input_len()..], n, &mut cols);
            let dyb = &dy[start * self.output_len()..(start + n) * self.output_len()];
            T::gemm(true, false, pl, self.out_channels, rows, T::one(), &cols, dyb, T::one(), gw);
            if let Some(dx) = dx.as_mut() {
                dcols.clear();
                dcols.resize(rows * pl, T::zero());
                T::gemm(false, true, rows, pl, self.out_channels, T::one(), dyb, w, T::zero(), &mut dcols);
                self.col2im_add(&dcols, &mut dx[start * self.input_len()..(start + n) * self.input_len()]);
            }
        }
        dx
    }
}

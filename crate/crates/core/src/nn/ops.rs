//! Forward and backward primitives for the supported layer kinds.
//!
//! All kernels work on flat row-major slices. Reductions run sequentially in
//! index order so results are reproducible bit-for-bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Abs,
}

impl Activation {
    pub fn forward(self, x: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => relu(x),
            Activation::Abs => abs(x),
        }
    }

    pub fn backward(self, input: &[f64], grad_out: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => relu_backward(input, grad_out),
            Activation::Abs => abs_backward(input, grad_out),
        }
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Subgradient 0 at the kink.
pub fn relu_backward(input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn abs(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.abs()).collect()
}

pub fn abs_backward(input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        })
        .collect()
}

/// Fully connected map `y = W x (+ b)` with `W` stored row-major as
/// `(outputs, inputs)`.
pub fn dense(x: &[f64], weights: &[f64], bias: Option<&[f64]>, outputs: usize) -> Vec<f64> {
    let inputs = x.len();
    debug_assert_eq!(weights.len(), inputs * outputs);
    (0..outputs)
        .map(|o| {
            let row = &weights[o * inputs..(o + 1) * inputs];
            let mut acc = bias.map_or(0.0, |b| b[o]);
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            acc
        })
        .collect()
}

/// Accumulates `dL/dW` (and `dL/db`) into `grad_params` and returns `dL/dx`
/// when `want_input_grad` is set.
pub fn dense_backward(
    x: &[f64],
    weights: &[f64],
    grad_out: &[f64],
    grad_params: &mut [f64],
    has_bias: bool,
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let inputs = x.len();
    let outputs = grad_out.len();
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut grad_params[o * inputs..(o + 1) * inputs];
        for (gw, v) in row.iter_mut().zip(x) {
            *gw += g * v;
        }
    }
    if has_bias {
        let gb = &mut grad_params[inputs * outputs..];
        for (b, g) in gb.iter_mut().zip(grad_out) {
            *b += g;
        }
    }
    if !want_input_grad {
        return None;
    }
    let mut gx = vec![0.0; inputs];
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &weights[o * inputs..(o + 1) * inputs];
        for (d, w) in gx.iter_mut().zip(row) {
            *d += g * w;
        }
    }
    Some(gx)
}

/// Geometry of a non-overlapping max-pool over `(channels, height, width)`.
/// One-dimensional inputs use `height = 1` and a window of `(1, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub window_h: usize,
    pub window_w: usize,
}

impl PoolGeometry {
    pub fn new(channels: usize, height: usize, width: usize, window_h: usize, window_w: usize) -> Result<Self> {
        if window_h == 0 || window_w == 0 {
            return Err(Error::config("pool window must be positive"));
        }
        if !height.is_multiple_of(window_h) || !width.is_multiple_of(window_w) {
            return Err(Error::config(format!(
                "pool window {window_h}x{window_w} does not divide spatial extent {height}x{width}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            window_h,
            window_w,
        })
    }

    pub fn out_height(&self) -> usize {
        self.height / self.window_h
    }

    pub fn out_width(&self) -> usize {
        self.width / self.window_w
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.channels * self.out_height() * self.out_width()
    }
}

/// Window maxima plus the flat input index each one came from. Ties go to the
/// lowest flat index.
pub fn maxpool(x: &[f64], geom: &PoolGeometry) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (geom.out_height(), geom.out_width());
    let mut out = Vec::with_capacity(geom.output_len());
    let mut argmax = Vec::with_capacity(geom.output_len());
    for c in 0..geom.channels {
        let plane = c * geom.height * geom.width;
        for r in 0..oh {
            for q in 0..ow {
                let mut best_idx = plane + r * geom.window_h * geom.width + q * geom.window_w;
                let mut best = x[best_idx];
                for dr in 0..geom.window_h {
                    for dq in 0..geom.window_w {
                        let idx = plane + (r * geom.window_h + dr) * geom.width + q * geom.window_w + dq;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}

pub fn maxpool_backward(grad_out: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut gx = vec![0.0; input_len];
    for (&g, &idx) in grad_out.iter().zip(argmax) {
        gx[idx] += g;
    }
    gx
}

/// Stride-1 cross-correlation with optional symmetric zero padding.
/// Kernels are stored as `(out_channels, in_channels, kernel, kernel)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(
        in_channels: usize,
        height: usize,
        width: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    ) -> Result<Self> {
        if kernel == 0 || out_channels == 0 {
            return Err(Error::config("convolution kernel and channel count must be positive"));
        }
        if height + 2 * padding < kernel || width + 2 * padding < kernel {
            return Err(Error::config(format!(
                "kernel {kernel} larger than padded input {height}x{width} (padding {padding})"
            )));
        }
        Ok(Self {
            in_channels,
            height,
            width,
            out_channels,
            kernel,
            padding,
        })
    }

    pub fn out_height(&self) -> usize {
        self.height + 2 * self.padding - self.kernel + 1
    }

    pub fn out_width(&self) -> usize {
        self.width + 2 * self.padding - self.kernel + 1
    }

    pub fn kernel_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    /// Input coordinate for output `(r, q)` and kernel offset `(kr, kq)`,
    /// or `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, r: usize, q: usize, kr: usize, kq: usize) -> Option<(usize, usize)> {
        let y = (r + kr).checked_sub(self.padding)?;
        let x = (q + kq).checked_sub(self.padding)?;
        (y < self.height && x < self.width).then_some((y, x))
    }
}

pub fn conv(x: &[f64], kernels: &[f64], bias: Option<&[f64]>, geom: &ConvGeometry) -> Vec<f64> {
    let (oh, ow, k) = (geom.out_height(), geom.out_width(), geom.kernel);
    let plane = geom.height * geom.width;
    let mut out = vec![0.0; geom.output_len()];
    for oc in 0..geom.out_channels {
        let b = bias.map_or(0.0, |b| b[oc]);
        for r in 0..oh {
            for q in 0..ow {
                let mut acc = b;
                for ic in 0..geom.in_channels {
                    let kbase = (oc * geom.in_channels + ic) * k * k;
                    for kr in 0..k {
                        for kq in 0..k {
                            if let Some((y, xx)) = geom.source(r, q, kr, kq) {
                                acc += kernels[kbase + kr * k + kq] * x[ic * plane + y * geom.width + xx];
                            }
                        }
                    }
                }
                out[(oc * oh + r) * ow + q] = acc;
            }
        }
    }
    out
}

/// Accumulates kernel (and bias) gradients into `grad_params`; returns the
/// input gradient when requested.
pub fn conv_backward(
    x: &[f64],
    kernels: &[f64],
    grad_out: &[f64],
    grad_params: &mut [f64],
    has_bias: bool,
    geom: &ConvGeometry,
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let (oh, ow, k) = (geom.out_height(), geom.out_width(), geom.kernel);
    let plane = geom.height * geom.width;
    let mut gx = want_input_grad.then(|| vec![0.0; geom.input_len()]);
    let klen = geom.kernel_len();
    for oc in 0..geom.out_channels {
        for r in 0..oh {
            for q in 0..ow {
                let g = grad_out[(oc * oh + r) * ow + q];
                if g == 0.0 {
                    continue;
                }
                if has_bias {
                    grad_params[klen + oc] += g;
                }
                for ic in 0..geom.in_channels {
                    let kbase = (oc * geom.in_channels + ic) * k * k;
                    for kr in 0..k {
                        for kq in 0..k {
                            if let Some((y, xx)) = geom.source(r, q, kr, kq) {
                                let xi = ic * plane + y * geom.width + xx;
                                grad_params[kbase + kr * k + kq] += g * x[xi];
                                if let Some(gx) = gx.as_mut() {
                                    gx[xi] += g * kernels[kbase + kr * k + kq];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

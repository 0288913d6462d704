//! Layer specifications and their forward/backward kernels.
//!
//! Feature maps are (H, W, C) row-major. Kernel layouts follow the usual
//! channels-last convention:
//!
//! | layer            | parameters                                            |
//! |------------------|-------------------------------------------------------|
//! | `Conv2D`         | kernel (k, k, Cin, Cout), bias (Cout)                 |
//! | `SeparableConv2D`| depthwise (k, k, C), pointwise (C, K), bias (K)       |
//! | `Dense`          | weights (out, in), bias (out)                         |
//!
//! Separable convolutions carry a single bias after the pointwise stage.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2D { filters: usize, kernel: usize, stride: usize, padding: Padding, activation: Activation },
    SeparableConv2D { filters: usize, kernel: usize, padding: Padding, activation: Activation },
    MaxPool2D { pool: usize },
    AveragePooling2D { pool: usize },
    Flatten,
    Dense { units: usize, activation: Activation },
    Dropout { rate: f64 },
    Softmax,
}

/// Output extent and leading padding of a convolution along one axis.
fn conv_extent(input: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < k {
                return Err(Error::Shape(format!("kernel {k} larger than input extent {input} with VALID padding")));
            }
            Ok(((input - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(input);
            Ok((out, total / 2))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    fn new(in_h: usize, in_w: usize, k: usize, stride: usize, padding: Padding) -> Result<Self> {
        let (out_h, pad_top) = conv_extent(in_h, k, stride, padding)?;
        let (out_w, pad_left) = conv_extent(in_w, k, stride, padding)?;
        Ok(Self { in_h, in_w, k, stride, pad_top, pad_left, out_h, out_w })
    }

    /// Input coordinate for output index `o` and kernel tap `t`, if inside.
    #[inline]
    fn src(o: usize, t: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let i = (o * stride + t).checked_sub(pad)?;
        (i < extent).then_some(i)
    }
}

fn rank3(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::Shape(format!("{what} expects a rank-3 (H, W, C) input, got {shape:?}"))),
    }
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        match *self {
            LayerSpec::Conv2D { filters, kernel, stride, .. } => {
                if filters == 0 || kernel == 0 || stride == 0 {
                    return bad(format!("Conv2D needs filters, kernel, stride >= 1: {self:?}"));
                }
            }
            LayerSpec::SeparableConv2D { filters, kernel, .. } => {
                if filters == 0 || kernel == 0 {
                    return bad(format!("SeparableConv2D needs filters, kernel >= 1: {self:?}"));
                }
            }
            LayerSpec::MaxPool2D { pool } | LayerSpec::AveragePooling2D { pool } => {
                if pool == 0 {
                    return bad("pool size must be >= 1".into());
                }
            }
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return bad("Dense needs units >= 1".into());
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("dropout rate must lie in [0, 1), got {rate}"));
                }
            }
            LayerSpec::Flatten | LayerSpec::Softmax => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::SeparableConv2D { .. } => "separable_conv2d",
            LayerSpec::MaxPool2D { .. } => "max_pool2d",
            LayerSpec::AveragePooling2D { .. } => "average_pooling2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Conv2D { activation, .. }
            | LayerSpec::SeparableConv2D { activation, .. }
            | LayerSpec::Dense { activation, .. } => activation,
            _ => Activation::None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        match *self {
            LayerSpec::Conv2D { filters, kernel, stride, padding, .. } => {
                let (h, w, _) = rank3(input, "Conv2D")?;
                let g = ConvGeom::new(h, w, kernel, stride, padding)?;
                Ok(vec![g.out_h, g.out_w, filters])
            }
            LayerSpec::SeparableConv2D { filters, kernel, padding, .. } => {
                let (h, w, _) = rank3(input, "SeparableConv2D")?;
                let g = ConvGeom::new(h, w, kernel, 1, padding)?;
                Ok(vec![g.out_h, g.out_w, filters])
            }
            LayerSpec::MaxPool2D { pool } | LayerSpec::AveragePooling2D { pool } => {
                let (h, w, c) = rank3(input, self.name())?;
                if pool > h || pool > w {
                    return Err(Error::Shape(format!("pool {pool} larger than input {h}x{w}")));
                }
                Ok(vec![h / pool, w / pool, c])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units, .. } => Ok(vec![units]),
            LayerSpec::Dropout { .. } => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 || input[0] < 2 {
                    return Err(Error::Shape(format!("softmax expects a vector of length >= 2, got {input:?}")));
                }
                Ok(input.to_vec())
            }
        }
    }

    /// Named parameter shapes for a given input shape.
    pub fn param_shapes(&self, input: &[usize]) -> Result<Vec<(&'static str, Vec<usize>)>> {
        Ok(match *self {
            LayerSpec::Conv2D { filters, kernel, .. } => {
                let (_, _, c) = rank3(input, "Conv2D")?;
                vec![("kernel", vec![kernel, kernel, c, filters]), ("bias", vec![filters])]
            }
            LayerSpec::SeparableConv2D { filters, kernel, .. } => {
                let (_, _, c) = rank3(input, "SeparableConv2D")?;
                vec![
                    ("depthwise", vec![kernel, kernel, c]),
                    ("pointwise", vec![c, filters]),
                    ("bias", vec![filters]),
                ]
            }
            LayerSpec::Dense { units, .. } => {
                let n: usize = input.iter().product();
                vec![("weights", vec![units, n]), ("bias", vec![units])]
            }
            _ => Vec::new(),
        })
    }

    /// Multiply-accumulates of one forward pass.
    pub fn macs(&self, input: &[usize]) -> Result<u64> {
        let out = self.output_shape(input)?;
        Ok(match *self {
            LayerSpec::Conv2D { kernel, .. } => {
                let cin = input[2] as u64;
                (out[0] * out[1] * out[2]) as u64 * (kernel * kernel) as u64 * cin
            }
            LayerSpec::SeparableConv2D { kernel, .. } => {
                let c = input[2] as u64;
                let positions = (out[0] * out[1]) as u64;
                positions * (kernel * kernel) as u64 * c + positions * c * out[2] as u64
            }
            LayerSpec::Dense { units, .. } => input.iter().product::<usize>() as u64 * units as u64,
            _ => 0,
        })
    }
}

/// Values retained by a layer's forward pass for its backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Conv { input: Tensor<T>, output: Tensor<T> },
    Separable { input: Tensor<T>, depthwise: Tensor<T>, output: Tensor<T> },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
    AvgPool { input_shape: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Dense { input: Tensor<T>, output: Tensor<T> },
    Dropout { mask: Vec<T> },
    Softmax { output: Tensor<T> },
}

impl<T: Scalar> LayerCache<T> {
    /// Output activation of the layer, where it was kept.
    pub fn output(&self) -> Option<&Tensor<T>> {
        match self {
            LayerCache::Conv { output, .. }
            | LayerCache::Separable { output, .. }
            | LayerCache::Dense { output, .. }
            | LayerCache::Softmax { output } => Some(output),
            _ => None,
        }
    }
}

/// A layer specification bound to its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub params: Vec<Tensor<T>>,
}

fn apply_activation<T: Scalar>(v: &mut [T], act: Activation) {
    if act == Activation::Relu {
        for x in v {
            if *x < T::zero() {
                *x = T::zero();
            }
        }
    }
}

/// dL/d(pre-activation) from dL/d(output) and the stored output.
fn activation_grad<T: Scalar>(dy: &Tensor<T>, output: &Tensor<T>, act: Activation) -> Vec<T> {
    match act {
        Activation::None => dy.data().to_vec(),
        Activation::Relu => {
            dy.data().iter().zip(output.data()).map(|(&d, &o)| if o > T::zero() { d } else { T::zero() }).collect()
        }
    }
}

const PAR_THRESHOLD: usize = 1 << 16;

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], cin: usize, g: &ConvGeom, kernel: &[T], bias: &[T]) -> Vec<T> {
    let cout = bias.len();
    let mut out = vec![T::zero(); g.out_h * g.out_w * cout];
    let row = |oy: usize, out_row: &mut [T]| {
        for ox in 0..g.out_w {
            let o = &mut out_row[ox * cout..(ox + 1) * cout];
            o.copy_from_slice(bias);
            for ky in 0..g.k {
                let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.pad_top, g.in_h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.pad_left, g.in_w) else { continue };
                    let xin = &x[(iy * g.in_w + ix) * cin..][..cin];
                    let kbase = (ky * g.k + kx) * cin * cout;
                    for (c, &v) in xin.iter().enumerate() {
                        if v == T::zero() {
                            continue;
                        }
                        let w = &kernel[kbase + c * cout..][..cout];
                        for (acc, &wv) in o.iter_mut().zip(w) {
                            *acc = *acc + v * wv;
                        }
                    }
                }
            }
        }
    };
    let work = out.len() * g.k * g.k * cin;
    if work >= PAR_THRESHOLD && g.out_h > 1 {
        out.par_chunks_mut(g.out_w * cout).enumerate().for_each(|(oy, r)| row(oy, r));
    } else {
        out.chunks_mut(g.out_w * cout).enumerate().for_each(|(oy, r)| row(oy, r));
    }
    out
}

/// Returns (dx, dkernel, dbias) for the pre-activation gradient `dpre`.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    cin: usize,
    g: &ConvGeom,
    kernel: &[T],
    cout: usize,
    dpre: &[T],
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let mut dk = vec![T::zero(); kernel.len()];
    let mut db = vec![T::zero(); cout];
    let mut dx = need_dx.then(|| vec![T::zero(); x.len()]);
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let d = &dpre[(oy * g.out_w + ox) * cout..][..cout];
            if d.iter().all(|&v| v == T::zero()) {
                continue;
            }
            for (b, &dv) in db.iter_mut().zip(d) {
                *b = *b + dv;
            }
            for ky in 0..g.k {
                let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.pad_top, g.in_h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.pad_left, g.in_w) else { continue };
                    let xbase = (iy * g.in_w + ix) * cin;
                    let kbase = (ky * g.k + kx) * cin * cout;
                    for c in 0..cin {
                        let v = x[xbase + c];
                        let krow = kbase + c * cout;
                        if v != T::zero() {
                            for (dkv, &dv) in dk[krow..krow + cout].iter_mut().zip(d) {
                                *dkv = *dkv + v * dv;
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            let acc = kernel[krow..krow + cout].iter().zip(d).fold(T::zero(), |a, (&w, &dv)| a + w * dv);
                            dx[xbase + c] = dx[xbase + c] + acc;
                        }
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

pub(crate) fn depthwise_forward<T: Scalar>(x: &[T], c: usize, g: &ConvGeom, dw: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); g.out_h * g.out_w * c];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let o = &mut out[(oy * g.out_w + ox) * c..][..c];
            for ky in 0..g.k {
                let Some(iy) = ConvGeom::src(oy, ky, 1, g.pad_top, g.in_h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = ConvGeom::src(ox, kx, 1, g.pad_left, g.in_w) else { continue };
                    let xin = &x[(iy * g.in_w + ix) * c..][..c];
                    let w = &dw[(ky * g.k + kx) * c..][..c];
                    for ((acc, &v), &wv) in o.iter_mut().zip(xin).zip(w) {
                        *acc = *acc + v * wv;
                    }
                }
            }
        }
    }
    out
}

/// Pointwise (1x1) mixing: (P, C) x (C, K) + bias.
fn pointwise_forward<T: Scalar>(d: &[T], c: usize, pw: &[T], bias: &[T]) -> Vec<T> {
    let k = bias.len();
    let positions = d.len() / c;
    let mut out = Vec::with_capacity(positions * k);
    for p in 0..positions {
        let row = &d[p * c..][..c];
        let start = out.len();
        out.extend_from_slice(bias);
        let o = &mut out[start..];
        for (ci, &v) in row.iter().enumerate() {
            let w = &pw[ci * k..][..k];
            for (acc, &wv) in o.iter_mut().zip(w) {
                *acc = *acc + v * wv;
            }
        }
    }
    out
}

impl<T: Scalar> Layer<T> {
    pub fn new(spec: LayerSpec, params: Vec<Tensor<T>>) -> Self {
        Self { spec, params }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<T>, LayerCache<T>)> {
        let out_shape = self.spec.output_shape(x.shape())?;
        match self.spec {
            LayerSpec::Conv2D { kernel, stride, padding, activation, .. } => {
                let (h, w, cin) = rank3(x.shape(), "Conv2D")?;
                self.check_params(x.shape())?;
                let g = ConvGeom::new(h, w, kernel, stride, padding)?;
                let mut out = conv2d_forward(x.data(), cin, &g, self.params[0].data(), self.params[1].data());
                apply_activation(&mut out, activation);
                let output = Tensor::new(out_shape, out)?;
                Ok((output.clone(), LayerCache::Conv { input: x.clone(), output }))
            }
            LayerSpec::SeparableConv2D { kernel, padding, activation, .. } => {
                let (h, w, c) = rank3(x.shape(), "SeparableConv2D")?;
                self.check_params(x.shape())?;
                let g = ConvGeom::new(h, w, kernel, 1, padding)?;
                let d = depthwise_forward(x.data(), c, &g, self.params[0].data());
                let mut out = pointwise_forward(&d, c, self.params[1].data(), self.params[2].data());
                apply_activation(&mut out, activation);
                let output = Tensor::new(out_shape, out)?;
                let depthwise = Tensor::new(vec![g.out_h, g.out_w, c], d)?;
                Ok((output.clone(), LayerCache::Separable { input: x.clone(), depthwise, output }))
            }
            LayerSpec::MaxPool2D { pool } => {
                let (_, w, c) = rank3(x.shape(), "MaxPool2D")?;
                let (oh, ow) = (out_shape[0], out_shape[1]);
                let mut out = Vec::with_capacity(oh * ow * c);
                let mut argmax = Vec::with_capacity(oh * ow * c);
                let xd = x.data();
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ch in 0..c {
                            let mut best = (oy * pool * w + ox * pool) * c + ch;
                            for py in 0..pool {
                                for px in 0..pool {
                                    let i = ((oy * pool + py) * w + ox * pool + px) * c + ch;
                                    if xd[i] > xd[best] {
                                        best = i;
                                    }
                                }
                            }
                            out.push(xd[best]);
                            argmax.push(best);
                        }
                    }
                }
                Ok((Tensor::new(out_shape, out)?, LayerCache::MaxPool { input_shape: x.shape().to_vec(), argmax }))
            }
            LayerSpec::AveragePooling2D { pool } => {
                let (_, w, c) = rank3(x.shape(), "AveragePooling2D")?;
                let (oh, ow) = (out_shape[0], out_shape[1]);
                let inv = T::c(1.0 / (pool * pool) as f64);
                let xd = x.data();
                let mut out = vec![T::zero(); oh * ow * c];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let o = &mut out[(oy * ow + ox) * c..][..c];
                        for py in 0..pool {
                            for px in 0..pool {
                                let xin = &xd[((oy * pool + py) * w + ox * pool + px) * c..][..c];
                                for (acc, &v) in o.iter_mut().zip(xin) {
                                    *acc = *acc + v;
                                }
                            }
                        }
                        for v in o.iter_mut() {
                            *v = *v * inv;
                        }
                    }
                }
                Ok((Tensor::new(out_shape, out)?, LayerCache::AvgPool { input_shape: x.shape().to_vec() }))
            }
            LayerSpec::Flatten => Ok((x.clone().reshape(out_shape)?, LayerCache::Flatten { input_shape: x.shape().to_vec() })),
            LayerSpec::Dense { units, activation } => {
                self.check_params(x.shape())?;
                let n = x.len();
                let (wts, bias) = (self.params[0].data(), self.params[1].data());
                let mut out: Vec<T> = (0..units)
                    .map(|u| {
                        let row = &wts[u * n..][..n];
                        row.iter().zip(x.data()).fold(bias[u], |acc, (&a, &b)| acc + a * b)
                    })
                    .collect();
                apply_activation(&mut out, activation);
                let output = Tensor::new(out_shape, out)?;
                Ok((output.clone(), LayerCache::Dense { input: x.clone(), output }))
            }
            LayerSpec::Dropout { rate } => {
                if mode == Mode::Infer || rate == 0.0 {
                    return Ok((x.clone(), LayerCache::Dropout { mask: vec![T::one(); x.len()] }));
                }
                let keep = T::c(1.0 / (1.0 - rate));
                let mask: Vec<T> = (0..x.len()).map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep }).collect();
                let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                Ok((Tensor::new(out_shape, out)?, LayerCache::Dropout { mask }))
            }
            LayerSpec::Softmax => {
                let output = Tensor::new(out_shape, softmax(x.data()))?;
                Ok((output.clone(), LayerCache::Softmax { output }))
            }
        }
    }

    /// Backpropagates `dy` (gradient w.r.t. this layer's output). Returns the
    /// gradient w.r.t. the input (when requested) and the parameter gradients.
    pub fn backward(&self, cache: &LayerCache<T>, dy: &Tensor<T>, need_dx: bool) -> Result<(Option<Tensor<T>>, Vec<Tensor<T>>)> {
        match (&self.spec, cache) {
            (&LayerSpec::Conv2D { kernel, stride, padding, activation, filters }, LayerCache::Conv { input, output }) => {
                let (h, w, cin) = rank3(input.shape(), "Conv2D")?;
                let g = ConvGeom::new(h, w, kernel, stride, padding)?;
                let dpre = activation_grad(dy, output, activation);
                let (dx, dk, db) = conv2d_backward(input.data(), cin, &g, self.params[0].data(), filters, &dpre, need_dx);
                let dx = dx.map(|d| Tensor::new(input.shape().to_vec(), d)).transpose()?;
                Ok((dx, vec![Tensor::new(self.params[0].shape().to_vec(), dk)?, Tensor::new(vec![filters], db)?]))
            }
            (&LayerSpec::SeparableConv2D { kernel, padding, activation, filters }, LayerCache::Separable { input, depthwise, output }) => {
                let (h, w, c) = rank3(input.shape(), "SeparableConv2D")?;
                let g = ConvGeom::new(h, w, kernel, 1, padding)?;
                let dpre = activation_grad(dy, output, activation);
                let pw = self.params[1].data();
                let dw = self.params[0].data();
                let d = depthwise.data();
                let positions = g.out_h * g.out_w;
                let mut dpw = vec![T::zero(); c * filters];
                let mut db = vec![T::zero(); filters];
                let mut dd = vec![T::zero(); positions * c];
                for p in 0..positions {
                    let dp = &dpre[p * filters..][..filters];
                    for (b, &v) in db.iter_mut().zip(dp) {
                        *b = *b + v;
                    }
                    for ci in 0..c {
                        let dv = d[p * c + ci];
                        let row = ci * filters;
                        let mut acc = T::zero();
                        for k in 0..filters {
                            dpw[row + k] = dpw[row + k] + dv * dp[k];
                            acc = acc + pw[row + k] * dp[k];
                        }
                        dd[p * c + ci] = acc;
                    }
                }
                let x = input.data();
                let mut ddw = vec![T::zero(); dw.len()];
                let mut dx = need_dx.then(|| vec![T::zero(); x.len()]);
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let ddp = &dd[(oy * g.out_w + ox) * c..][..c];
                        for ky in 0..g.k {
                            let Some(iy) = ConvGeom::src(oy, ky, 1, g.pad_top, g.in_h) else { continue };
                            for kx in 0..g.k {
                                let Some(ix) = ConvGeom::src(ox, kx, 1, g.pad_left, g.in_w) else { continue };
                                let xb = (iy * g.in_w + ix) * c;
                                let wb = (ky * g.k + kx) * c;
                                for ci in 0..c {
                                    ddw[wb + ci] = ddw[wb + ci] + x[xb + ci] * ddp[ci];
                                    if let Some(dx) = dx.as_mut() {
                                        dx[xb + ci] = dx[xb + ci] + dw[wb + ci] * ddp[ci];
                                    }
                                }
                            }
                        }
                    }
                }
                let dx = dx.map(|d| Tensor::new(input.shape().to_vec(), d)).transpose()?;
                Ok((
                    dx,
                    vec![
                        Tensor::new(self.params[0].shape().to_vec(), ddw)?,
                        Tensor::new(self.params[1].shape().to_vec(), dpw)?,
                        Tensor::new(vec![filters], db)?,
                    ],
                ))
            }
            (LayerSpec::MaxPool2D { .. }, LayerCache::MaxPool { input_shape, argmax }) => {
                let mut dx = Tensor::zeros(input_shape);
                let dxd = dx.data_mut();
                for (&i, &d) in argmax.iter().zip(dy.data()) {
                    dxd[i] = dxd[i] + d;
                }
                Ok((Some(dx), Vec::new()))
            }
            (&LayerSpec::AveragePooling2D { pool }, LayerCache::AvgPool { input_shape }) => {
                let (_, w, c) = rank3(input_shape, "AveragePooling2D")?;
                let (oh, ow) = (dy.shape()[0], dy.shape()[1]);
                let inv = T::c(1.0 / (pool * pool) as f64);
                let mut dx = Tensor::zeros(input_shape);
                let dxd = dx.data_mut();
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = &dy.data()[(oy * ow + ox) * c..][..c];
                        for py in 0..pool {
                            for px in 0..pool {
                                let base = ((oy * pool + py) * w + ox * pool + px) * c;
                                for (ci, &gv) in g.iter().enumerate() {
                                    dxd[base + ci] = dxd[base + ci] + gv * inv;
                                }
                            }
                        }
                    }
                }
                Ok((Some(dx), Vec::new()))
            }
            (LayerSpec::Flatten, LayerCache::Flatten { input_shape }) => {
                Ok((Some(dy.clone().reshape(input_shape.clone())?), Vec::new()))
            }
            (&LayerSpec::Dense { units, activation }, LayerCache::Dense { input, output }) => {
                let dpre = activation_grad(dy, output, activation);
                let n = input.len();
                let x = input.data();
                let wts = self.params[0].data();
                let mut dw = vec![T::zero(); units * n];
                for (u, &d) in dpre.iter().enumerate() {
                    for (slot, &xv) in dw[u * n..][..n].iter_mut().zip(x) {
                        *slot = d * xv;
                    }
                }
                let dx = need_dx
                    .then(|| {
                        let mut dx = vec![T::zero(); n];
                        for (u, &d) in dpre.iter().enumerate() {
                            for (slot, &wv) in dx.iter_mut().zip(&wts[u * n..][..n]) {
                                *slot = *slot + wv * d;
                            }
                        }
                        Tensor::new(input.shape().to_vec(), dx)
                    })
                    .transpose()?;
                Ok((dx, vec![Tensor::new(vec![units, n], dw)?, Tensor::new(vec![units], dpre)?]))
            }
            (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
                let dx = dy.data().iter().zip(mask).map(|(&d, &m)| d * m).collect();
                Ok((Some(Tensor::new(dy.shape().to_vec(), dx)?), Vec::new()))
            }
            (LayerSpec::Softmax, LayerCache::Softmax { output }) => {
                let p = output.data();
                let dot: T = p.iter().zip(dy.data()).map(|(&a, &b)| a * b).sum();
                let dx = p.iter().zip(dy.data()).map(|(&pi, &di)| pi * (di - dot)).collect();
                Ok((Some(Tensor::new(dy.shape().to_vec(), dx)?), Vec::new()))
            }
            (spec, _) => Err(Error::Shape(format!("cache does not belong to a {} layer", spec.name()))),
        }
    }

    fn check_params(&self, input: &[usize]) -> Result<()> {
        let expected = self.spec.param_shapes(input)?;
        if expected.len() != self.params.len()
            || expected.iter().zip(&self.params).any(|((_, s), p)| s.as_slice() != p.shape())
        {
            return Err(Error::Shape(format!(
                "{} parameters do not match input {input:?}: expected {:?}",
                self.spec.name(),
                expected
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(shape: &[usize], d: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), d.to_vec()).unwrap()
    }

    fn rng() -> Rng {
        Rng::seed_from_u64(1)
    }

    fn sep(k: usize, padding: Padding, params: Vec<Tensor<f64>>) -> Layer<f64> {
        Layer::new(LayerSpec::SeparableConv2D { filters: params[2].len(), kernel: k, padding, activation: Activation::None }, params)
    }

    #[test]
    fn separable_identity_kernel() {
        let x = t(&[3, 3, 1], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let mut delta = vec![0.0; 9];
        delta[4] = 1.0;
        let layer = sep(3, Padding::Same, vec![t(&[3, 3, 1], &delta), t(&[1, 1], &[1.0]), t(&[1], &[0.0])]);
        let (y, _) = layer.forward(&x, Mode::Infer, &mut rng()).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn separable_affine_and_valid_sum() {
        let x = t(&[2, 2, 1], &[1., 2., 3., 4.]);
        let layer = sep(1, Padding::Valid, vec![t(&[1, 1, 1], &[2.0]), t(&[1, 1], &[3.0]), t(&[1], &[1.0])]);
        let (y, _) = layer.forward(&x, Mode::Infer, &mut rng()).unwrap();
        assert_eq!(y.data(), &[7., 13., 19., 25.]);

        let ones = t(&[3, 3, 1], &[1.0; 9]);
        let layer = sep(3, Padding::Valid, vec![t(&[3, 3, 1], &[1.0; 9]), t(&[1, 1], &[1.0]), t(&[1], &[0.0])]);
        let (y, _) = layer.forward(&ones, Mode::Infer, &mut rng()).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn separable_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[3, 3, 2]);
        let layer = sep(1, Padding::Valid, vec![t(&[1, 1, 1], &[1.0]), t(&[1, 1], &[1.0]), t(&[1], &[0.0])]);
        assert!(matches!(layer.forward(&x, Mode::Infer, &mut rng()), Err(Error::Shape(_))));
    }

    #[test]
    fn average_pool_floor_semantics() {
        let pool = Layer::<f64>::new(LayerSpec::AveragePooling2D { pool: 2 }, vec![]);
        let (y, _) = pool.forward(&t(&[2, 2, 1], &[1., 2., 3., 4.]), Mode::Infer, &mut rng()).unwrap();
        assert_eq!(y.data(), &[2.5]);
        let (y, _) = pool.forward(&t(&[3, 3, 1], &[1., 2., 100., 3., 4., 100., 100., 100., 100.]), Mode::Infer, &mut rng()).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[2.5]);
        let (y, _) = pool.forward(&Tensor::full(&[4, 4, 2], 3.0), Mode::Infer, &mut rng()).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
        assert!(pool.forward(&Tensor::zeros(&[1, 1, 1]), Mode::Infer, &mut rng()).is_err());
    }

    #[test]
    fn flatten_row_major() {
        let f = Layer::<f64>::new(LayerSpec::Flatten, vec![]);
        let (y, _) = f.forward(&t(&[2, 2, 1], &[1., 2., 3., 4.]), Mode::Infer, &mut rng()).unwrap();
        assert_eq!(y.shape(), &[4]);
        assert_eq!(y.data(), &[1., 2., 3., 4.]);
        let (y, _) = f.forward(&t(&[3], &[1., 2., 3.]), Mode::Infer, &mut rng()).unwrap();
        assert_eq!(y.shape(), &[3]);
        assert_eq!(LayerSpec::Flatten.output_shape(&[7, 7, 64]).unwrap(), vec![3136]);
    }

    #[test]
    fn dense_examples() {
        let relu = |w: &[f64], b: &[f64], out: usize, inp: usize, act| {
            Layer::new(LayerSpec::Dense { units: out, activation: act }, vec![t(&[out, inp], w), t(&[out], b)])
        };
        let l = relu(&[1., 0., 0., 1.], &[0., 0.], 2, 2, Activation::Relu);
        assert_eq!(l.forward(&t(&[2], &[-1., 2.]), Mode::Infer, &mut rng()).unwrap().0.data(), &[0., 2.]);
        let l = relu(&[1., 1.], &[0.5], 1, 2, Activation::None);
        assert_eq!(l.forward(&t(&[2], &[1., 2.]), Mode::Infer, &mut rng()).unwrap().0.data(), &[3.5]);
        let l = relu(&[0., 0.], &[7.], 1, 2, Activation::Relu);
        assert_eq!(l.forward(&t(&[2], &[5., -3.]), Mode::Infer, &mut rng()).unwrap().0.data(), &[7.]);
        let l = relu(&[1., 1., 1.], &[0.], 1, 3, Activation::None);
        assert!(matches!(l.forward(&t(&[2], &[1., 2.]), Mode::Infer, &mut rng()), Err(Error::Shape(_))));
    }

    #[test]
    fn dropout_modes() {
        let x = t(&[4], &[1., 2., 3., 4.]);
        let d = Layer::new(LayerSpec::Dropout { rate: 0.5 }, vec![]);
        assert_eq!(d.forward(&x, Mode::Infer, &mut rng()).unwrap().0, x);
        let d0 = Layer::new(LayerSpec::Dropout { rate: 0.0 }, vec![]);
        assert_eq!(d0.forward(&x, Mode::Train, &mut rng()).unwrap().0, x);
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: -0.1 }.validate().is_err());
    }

    #[test]
    fn dropout_is_unbiased() {
        let x = t(&[4], &[1., -2., 3., 0.5]);
        let d = Layer::new(LayerSpec::Dropout { rate: 0.5 }, vec![]);
        let mut r = rng();
        let mut sum = vec![0.0; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let (y, _) = d.forward(&x, Mode::Train, &mut r).unwrap();
            for (s, v) in sum.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for (s, v) in sum.iter().zip(x.data()) {
            let mean = s / draws as f64;
            assert!((mean - v).abs() <= 0.05 * v.abs(), "mean {mean} vs {v}");
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0f64, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[2.0f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&[1000.0f64, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-12);
    }

    #[test]
    fn same_padding_geometry() {
        let g = ConvGeom::new(224, 224, 3, 1, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (224, 1));
        let g = ConvGeom::new(7, 7, 3, 1, Padding::Valid).unwrap();
        assert_eq!(g.out_h, 5);
        let g = ConvGeom::new(5, 5, 3, 2, Padding::Same).unwrap();
        assert_eq!((g.out_h, g.pad_top), (3, 1));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_normalized_and_shift_invariant(z in prop::collection::vec(-50.0f64..50.0, 2..8), c in -100.0f64..100.0) {
                let p = softmax(&z);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
                for (a, b) in p.iter().zip(softmax(&shifted)) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }
}
